"""Majority vote truth tables."""

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ensemble import SegmentationError, VoteStack, majority_vote
from raster_core import GeoTransform, RasterGrid

T = GeoTransform(10.0, 45.2, 0.001, 0.001)


def _masks(*votes, nodata=None):
    """One 1x1 mask per vote; None votes are nodata."""
    out = []
    for v in votes:
        if v is None:
            out.append(RasterGrid(np.array([[255]], dtype=np.uint8), T, 255))
        else:
            out.append(RasterGrid(np.array([[v]], dtype=np.uint8), T, nodata))
    return out


def _vote(*votes, threshold=2):
    return majority_vote(VoteStack(_masks(*votes), threshold))


def test_two_of_four():
    assert _vote(1, 1, 0, 0).data[0, 0, 0] == 1


def test_one_of_four():
    assert _vote(1, 0, 0, 0).data[0, 0, 0] == 0


def test_exhaustive_four_vote_table():
    combos = list(itertools.product([0, 1], repeat=4))
    stack = [RasterGrid(np.array([[c[k] for c in combos]], dtype=np.uint8), T) for k in range(4)]
    out = majority_vote(VoteStack(stack, 2)).data[0, 0]
    assert out.sum() == 11
    for c, got in zip(combos, out):
        assert got == (1 if sum(c) >= 2 else 0)


def test_flipping_a_vote_up_never_removes_a_building():
    for combo in itertools.product([0, 1], repeat=4):
        base = _vote(*combo).data[0, 0, 0]
        for k in range(4):
            if combo[k] == 0:
                flipped = list(combo)
                flipped[k] = 1
                assert _vote(*flipped).data[0, 0, 0] >= base


def test_nodata_votes_abstain():
    assert _vote(1, None, None, 0).data[0, 0, 0] == 0
    assert _vote(1, 1, None, None).data[0, 0, 0] == 1


def test_all_nodata_votes_give_nodata():
    out = _vote(None, None, None, None)
    assert out.nodata == 255
    assert not out.pixel_valid().any()


def test_threshold_bounds():
    with pytest.raises(SegmentationError):
        VoteStack(_masks(1, 0), threshold=3)
    with pytest.raises(SegmentationError):
        VoteStack(_masks(1, 0), threshold=0)
    with pytest.raises(SegmentationError):
        VoteStack([], threshold=1)


def test_misaligned_masks():
    a = RasterGrid(np.zeros((2, 2), dtype=np.uint8), T)
    b = RasterGrid(np.zeros((2, 3), dtype=np.uint8), T)
    with pytest.raises(SegmentationError):
        VoteStack([a, b], 1)


# ---------------------------------------------------------------------------
# Properties
# ---------------------------------------------------------------------------

@st.composite
def mask_stacks(draw, n=4):
    """n aligned 0/1 masks, some pixels optionally nodata."""
    shape = (draw(st.integers(1, 12)), draw(st.integers(1, 12)))
    with_nodata = draw(st.booleans())
    values = st.sampled_from([0, 1, 255]) if with_nodata else st.integers(0, 1)
    return [RasterGrid(draw(arrays(np.uint8, shape, elements=values)), T, 255 if with_nodata else None)
            for _ in range(n)]


@given(mask_stacks(), st.integers(1, 4), st.permutations(range(4)))
def test_vote_ignores_mask_order(masks, threshold, order):
    shuffled = [masks[k] for k in order]
    assert majority_vote(VoteStack(shuffled, threshold)) == majority_vote(VoteStack(masks, threshold))


@given(mask_stacks())
def test_threshold_one_is_or_and_four_is_and(masks):
    valid = np.stack([m.pixel_valid() for m in masks])
    positive = np.stack([m.data[0] == 1 for m in masks]) & valid
    voted = valid.any(axis=0)

    union = majority_vote(VoteStack(masks, 1))
    np.testing.assert_array_equal(union.data[0][voted] == 1, positive.any(axis=0)[voted])
    everyone = majority_vote(VoteStack(masks, 4))
    np.testing.assert_array_equal(everyone.data[0][voted] == 1, positive.sum(axis=0)[voted] == 4)
    assert not union.pixel_valid()[~voted].any()


@given(mask_stacks(n=1), st.integers(1, 4))
def test_identical_masks_vote_to_themselves(masks, threshold):
    m = masks[0]
    out = majority_vote(VoteStack([m] * 4, threshold))
    assert out.same_grid(m)
    np.testing.assert_array_equal(out.pixel_valid(), m.pixel_valid())
    np.testing.assert_array_equal(out.data[0][m.pixel_valid()], m.data[0][m.pixel_valid()])
