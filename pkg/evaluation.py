"""F1 / IoU scoring of predicted building masks against reference masks."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from raster_core import RasterGrid, read_raster

logger = logging.getLogger(__name__)

SCOPES = ('city', 'continent', 'world')
WORLD = 'world'
SCORE_COLUMNS = ['scope', 'scope_id', 'n_patches', 'f1', 'iou']


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise EvaluationError(f"negative count in {self}")

    def __add__(self, other: 'Confusion') -> 'Confusion':
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ScoreRow:
    scope: str
    scope_id: str
    n_patches: int
    f1: Optional[float]
    iou: Optional[float]

    def as_dict(self) -> dict:
        return {'scope': self.scope, 'scope_id': self.scope_id, 'n_patches': self.n_patches,
                'f1': self.f1, 'iou': self.iou}


def confusion(pred: RasterGrid, ref: RasterGrid) -> Confusion:
    """2x2 table over pixels valid on both sides."""
    if (pred.width, pred.height) != (ref.width, ref.height):
        raise EvaluationError(f"prediction {pred.height}x{pred.width} vs reference {ref.height}x{ref.width}")
    both = pred.pixel_valid() & ref.pixel_valid()
    p = (pred.data[0] != 0)[both]
    r = (ref.data[0] != 0)[both]
    return Confusion(
        tp=int(np.count_nonzero(p & r)),
        fp=int(np.count_nonzero(p & ~r)),
        fn=int(np.count_nonzero(~p & r)),
        tn=int(np.count_nonzero(~p & ~r)),
    )


def f1_iou(c: Confusion) -> Tuple[Optional[float], Optional[float]]:
    """(f1, iou), or (None, None) when there is nothing positive on either side."""
    denom = c.tp + c.fp + c.fn
    if denom == 0:
        return None, None
    return 2 * c.tp / (2 * c.tp + c.fp + c.fn), c.tp / denom


def _mean(values: List[float]) -> Optional[float]:
    return sum(values) / len(values) if values else None


def aggregate(scores: Mapping[str, Confusion], grouping: Mapping[str, str], scope: str = 'city',
              mode: str = 'micro') -> List[ScoreRow]:
    """One ScoreRow per group id, sorted.

    micro sums the group's confusions and scores the sum; macro averages the
    defined per-patch scores. Undefined patch scores never count as 0 or 1.
    """
    if mode not in ('micro', 'macro'):
        raise EvaluationError(f"unknown aggregation mode {mode!r}")
    members: Dict[str, List[str]] = {}
    for patch_id, group in grouping.items():
        members.setdefault(str(group), [])
        if patch_id in scores:
            members[str(group)].append(patch_id)
        else:
            logger.warning("patch %s listed in group %s has no score", patch_id, group)

    rows = []
    for group in sorted(members):
        patches = sorted(members[group])
        if not patches:
            raise EvaluationError(f"{scope} {group!r} has no scored patches")
        if mode == 'micro':
            total = Confusion()
            for pid in patches:
                total = total + scores[pid]
            f1, iou = f1_iou(total)
        else:
            defined = [f1_iou(scores[pid]) for pid in patches]
            defined = [s for s in defined if s[0] is not None]
            f1 = _mean([s[0] for s in defined])
            iou = _mean([s[1] for s in defined])
        rows.append(ScoreRow(scope, group, len(patches), f1, iou))
    return rows


def read_groups(path: Union[str, Path]) -> pd.DataFrame:
    df = pd.read_csv(path, dtype=str)
    missing = {'patch_id', 'city', 'continent'} - set(df.columns)
    if missing:
        raise EvaluationError(f"{path}: missing column(s) {sorted(missing)}")
    if df['patch_id'].duplicated().any():
        raise EvaluationError(f"{path}: duplicate patch_id values")
    return df


def _patch_path(directory: Path, patch_id: str) -> Path:
    for suffix in ('.tif', '.tiff', '.json'):
        candidate = directory / f"{patch_id}{suffix}"
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"no raster for patch {patch_id} in {directory}")


def score_patches(pred_dir: Union[str, Path], ref_dir: Union[str, Path], patch_ids) -> Dict[str, Confusion]:
    pred_dir, ref_dir = Path(pred_dir), Path(ref_dir)
    return {
        pid: confusion(read_raster(_patch_path(pred_dir, pid)), read_raster(_patch_path(ref_dir, pid)))
        for pid in sorted(patch_ids)
    }


def score_table(scores: Mapping[str, Confusion], groups: pd.DataFrame, mode: str = 'micro') -> pd.DataFrame:
    """city rows, then continent rows, then the world row."""
    rows: List[ScoreRow] = []
    rows += aggregate(scores, dict(zip(groups['patch_id'], groups['city'])), 'city', mode)
    rows += aggregate(scores, dict(zip(groups['patch_id'], groups['continent'])), 'continent', mode)
    rows += aggregate(scores, {pid: WORLD for pid in groups['patch_id']}, WORLD, mode)
    return pd.DataFrame([r.as_dict() for r in rows], columns=SCORE_COLUMNS)


def evaluate_dirs(pred_dir, ref_dir, groups_csv, mode: str = 'micro') -> pd.DataFrame:
    groups = read_groups(groups_csv)
    scores = score_patches(pred_dir, ref_dir, groups['patch_id'])
    return score_table(scores, groups, mode)


def compare_products(products: Mapping[str, Union[str, Path]], ref_dir, groups_csv,
                     mode: str = 'micro') -> pd.DataFrame:
    """Score several prediction sets against one reference, one table block per product."""
    if not products:
        raise EvaluationError("no products to compare")
    groups = read_groups(groups_csv)
    frames = []
    for name, pred_dir in products.items():
        table = score_table(score_patches(pred_dir, ref_dir, groups['patch_id']), groups, mode)
        table.insert(0, 'product', name)
        frames.append(table)
    return pd.concat(frames, ignore_index=True)
