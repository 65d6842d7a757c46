"""density, solar-map, solar-total, zonal-area and regress."""
import json
import logging

import pandas as pd

from analytics import (DEFAULT_CELL_M, KWH_PER_PWH, RegionStats, SolarParams, attach_socioeconomic,
                       building_area, consumption_coverage, density_map, read_socioeconomic_csv,
                       regress_table, solar_potential_band, solar_potential_map, solar_potential_total,
                       zonal_building_area, zonal_table)
from labelgen import PolygonSet
from raster_core import read_raster, write_raster

logger = logging.getLogger(__name__)


def _solar_args(p):
    defaults = SolarParams()
    p.add_argument('--a-p', type=float, default=defaults.a_p, help='roof area per 1 kWp system, m2')
    p.add_argument('--loss', type=float, default=defaults.loss)
    p.add_argument('--pv-default', type=float, default=defaults.pv_default,
                   help='kWh/kWp/day used outside the atlas')


def _solar_params(args) -> SolarParams:
    return SolarParams(a_p=args.a_p, loss=args.loss, pv_default=args.pv_default)


def register(subparsers):
    p = subparsers.add_parser('density', help='Building density per coarse cell')
    p.add_argument('--buildings', required=True)
    p.add_argument('--cell-m', type=float, default=DEFAULT_CELL_M)
    p.add_argument('--out', required=True)
    p.set_defaults(handler=run_density)

    p = subparsers.add_parser('solar-map', help='Yearly rooftop PV potential per coarse cell, kWh')
    p.add_argument('--buildings', required=True)
    p.add_argument('--atlas', help='PV yield raster; pv-default is used everywhere when omitted')
    p.add_argument('--cell-m', type=float, default=DEFAULT_CELL_M)
    _solar_args(p)
    p.add_argument('--out', required=True)
    p.set_defaults(handler=run_solar_map)

    p = subparsers.add_parser('solar-total', help='Yearly rooftop PV potential total')
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument('--buildings', help='building raster')
    src.add_argument('--area-km2', type=float, help='total building footprint area')
    pv = p.add_mutually_exclusive_group()
    pv.add_argument('--pv', type=float, help='constant kWh/kWp/day')
    pv.add_argument('--atlas', help='PV yield raster (needs --buildings)')
    p.add_argument('--cell-m', type=float, default=DEFAULT_CELL_M)
    p.add_argument('--consumption-pwh', type=float,
                   help='report the potential as a multiple of this yearly consumption')
    _solar_args(p)
    p.set_defaults(handler=run_solar_total)

    p = subparsers.add_parser('zonal-area', help='Building area per region')
    p.add_argument('--buildings', required=True)
    p.add_argument('--regions', required=True, help='GeoJSON region polygons')
    p.add_argument('--id-field', default='region_id')
    p.add_argument('--out', required=True)
    p.set_defaults(handler=run_zonal_area)

    p = subparsers.add_parser('regress', help='Regress socioeconomic variables on building area')
    p.add_argument('--zonal', required=True, help='CSV with region_id,building_area_m2')
    p.add_argument('--socio', required=True, help='CSV with region_id and variable columns')
    p.add_argument('--log', action='store_true', help='fit log10(y) against log10(area)')
    p.add_argument('--out', required=True)
    p.set_defaults(handler=run_regress)


def run_density(args) -> int:
    write_raster(density_map(read_raster(args.buildings), args.cell_m), args.out)
    logger.info(f"Density map -> {args.out}")
    return 0


def run_solar_map(args) -> int:
    atlas = read_raster(args.atlas) if args.atlas else None
    m = solar_potential_map(read_raster(args.buildings), atlas, _solar_params(args), args.cell_m)
    write_raster(m, args.out)
    logger.info(f"Solar potential map -> {args.out}")
    return 0


def run_solar_total(args) -> int:
    params = _solar_params(args)
    buildings = read_raster(args.buildings) if args.buildings else None
    area = building_area(buildings) if buildings is not None else args.area_km2 * 1e6
    if args.atlas:
        total = solar_potential_total(buildings if buildings is not None else area,
                                      read_raster(args.atlas), params, args.cell_m)
    else:
        total = solar_potential_total(area, args.pv if args.pv is not None else params.pv_default, params)
    band_pv = args.pv if args.pv is not None else params.pv_default
    low, high = solar_potential_band(area, band_pv, params)
    result = {
        'building_area_m2': area,
        'solar_kwh_per_year': total,
        'solar_pwh_per_year': total / KWH_PER_PWH,
        'band_pwh_per_year': [low / KWH_PER_PWH, high / KWH_PER_PWH],
    }
    if args.consumption_pwh is not None:
        consumption = args.consumption_pwh * KWH_PER_PWH
        result['consumption_coverage'] = consumption_coverage(total, consumption)
        result['consumption_coverage_band'] = [consumption_coverage(low, consumption),
                                               consumption_coverage(high, consumption)]
    print(json.dumps(result, indent=2))
    return 0


def run_zonal_area(args) -> int:
    regions = PolygonSet.from_geojson(args.regions, id_field=args.id_field)
    stats = zonal_building_area(read_raster(args.buildings), regions)
    zonal_table(stats).to_csv(args.out, index=False)
    logger.info(f"Zonal areas for {len(regions)} regions -> {args.out}")
    return 0


def run_regress(args) -> int:
    zonal = pd.read_csv(args.zonal, dtype={'region_id': str})
    stats = [RegionStats(str(r.region_id), float(r.building_area_m2)) for r in zonal.itertuples()]
    stats = attach_socioeconomic(stats, read_socioeconomic_csv(args.socio))
    regress_table(stats, log=args.log).to_csv(args.out, index=False)
    logger.info(f"Regression over {len(stats)} regions -> {args.out}")
    return 0
