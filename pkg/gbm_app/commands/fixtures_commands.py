"""fixtures generate: synthetic desk-scale world."""
import logging

from fixtures_world import SyntheticWorldSpec, generate_world

logger = logging.getLogger(__name__)


def register(subparsers):
    p = subparsers.add_parser('fixtures', help='Synthetic test data')
    actions = p.add_subparsers(dest='fixtures_command', metavar='<action>')
    actions.required = True
    defaults = SyntheticWorldSpec()
    g = actions.add_parser('generate', help='Write a synthetic world with a ready-to-run config.json')
    g.add_argument('--seed', type=int, default=defaults.seed)
    g.add_argument('--cells', type=int, default=defaults.n_cells)
    g.add_argument('--buildings-per-cell', type=int, default=defaults.buildings_per_cell)
    g.add_argument('--cell-pixels', type=int, default=defaults.cell_pixels)
    g.add_argument('--out', required=True)
    g.set_defaults(handler=run_generate)


def run_generate(args) -> int:
    spec = SyntheticWorldSpec(seed=args.seed, n_cells=args.cells,
                              buildings_per_cell=args.buildings_per_cell, cell_pixels=args.cell_pixels)
    world = generate_world(spec, args.out)
    print(f"{len(world['cells'])} cell(s), {world['n_buildings']} building(s) -> {args.out}")
    return 0
