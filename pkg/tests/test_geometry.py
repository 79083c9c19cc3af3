"""Tests for resampling and crop/pad."""

from __future__ import annotations

import numpy as np
import pytest

from gbmask.errors import ContractViolation, EmptyMaskError
from gbmask.pipeline import (
    BinaryMask,
    LabelMap,
    Volume,
    crop_or_pad,
    mask_center_of_mass,
    physical_center_of_mass,
    resample_nearest,
    resample_trilinear,
)


def linear_field(z, y, x):
    return 2.0 + 0.5 * z + 0.25 * y - x


def sampled(dims, spacing, origin=(0.0, 0.0, 0.0)) -> Volume:
    grid = Volume(np.zeros(dims), spacing, origin)
    z, y, x = np.meshgrid(*(grid.voxel_centers(a) for a in range(3)), indexing="ij")
    return grid.with_voxels(linear_field(z, y, x).astype(np.float32))


def test_identity_resample_copies_input(np_rng):
    v = Volume(np_rng.normal(size=(5, 6, 7)), (1.5, 1.5, 1.5), (1.0, 2.0, 3.0))
    out = resample_trilinear(v, 1.5)
    assert out.equals(v)
    assert out.voxels is not v.voxels


def test_trilinear_reproduces_linear_field_at_half_spacing():
    v = sampled((6, 6, 6), (2.0, 2.0, 2.0))
    out = resample_trilinear(v, 1.0)
    assert out.dims == (12, 12, 12)
    z, y, x = np.meshgrid(*(out.voxel_centers(a) for a in range(3)), indexing="ij")
    expected = linear_field(z, y, x)
    # output centers inside the source hull (away from clamped borders)
    inner = (slice(1, -1),) * 3
    np.testing.assert_allclose(out.voxels[inner], expected[inner], atol=1e-5)


def test_constant_volume_stays_constant_at_any_spacing():
    v = Volume(np.full((4, 5, 6), 7.0), (1.0, 2.0, 0.5))
    for target in (0.7, 1.5, (3.0, 1.0, 2.0)):
        np.testing.assert_allclose(resample_trilinear(v, target).voxels, 7.0)


def test_resampled_dims_round_physical_extent():
    v = Volume(np.zeros((10, 7, 3)), (1.0, 1.0, 1.0))
    assert resample_trilinear(v, 1.5).dims == (7, 5, 2)
    assert resample_trilinear(v, (2.0, 0.5, 1.0)).dims == (5, 14, 3)


def test_resample_degenerate_grid_and_bad_spacing_are_contract_violations():
    with pytest.raises(ContractViolation):
        resample_trilinear(Volume(np.zeros((0, 2, 2))), 1.0)
    with pytest.raises(ContractViolation):
        resample_trilinear(Volume(np.zeros((2, 2, 2))), 0.0)


def test_nearest_identity_and_no_new_labels(np_rng):
    labels = LabelMap(np_rng.integers(0, 4, (6, 6, 6)), (1.0, 1.0, 1.0))
    assert resample_nearest(labels, 1.0).equals(labels)
    for target in (0.4, 1.3, 2.5):
        out = resample_nearest(labels, target)
        assert set(np.unique(out.voxels)) <= set(np.unique(labels.voxels))


def test_nearest_upsampling_single_voxel_gives_block():
    voxels = np.zeros((3, 3, 3), dtype=np.uint8)
    voxels[1, 2, 0] = 1
    out = resample_nearest(BinaryMask(voxels, (2.0, 2.0, 2.0)), 1.0)
    assert out.dims == (6, 6, 6)
    expected = np.zeros((6, 6, 6), dtype=np.uint8)
    expected[2:4, 4:6, 0:2] = 1
    np.testing.assert_array_equal(out.voxels, expected)


def test_nearest_rejects_intensity_volumes():
    with pytest.raises(ContractViolation):
        resample_nearest(Volume(np.zeros((2, 2, 2))), 1.0)


def test_crop_with_full_size_at_center_is_identity(np_rng):
    v = Volume(np_rng.normal(size=(4, 6, 8)), (1.0, 2.0, 3.0), (5.0, 5.0, 5.0))
    out = crop_or_pad(v, (4, 6, 8), (2.0, 3.0, 4.0))
    assert out.equals(v)


def test_crop_selects_hand_picked_block():
    ramp = Volume(np.arange(64, dtype=np.float32).reshape(4, 4, 4))
    out = crop_or_pad(ramp, 2, (1, 2, 2))
    # start = center - size // 2 = (0, 1, 1)
    np.testing.assert_array_equal(out.voxels, ramp.voxels[0:2, 1:3, 1:3])
    assert out.origin == (0.0, 1.0, 1.0)


def test_crop_pads_with_background_per_kind():
    hu = crop_or_pad(Volume(np.zeros((2, 2, 2))), 4, (0.5, 0.5, 0.5))
    assert hu.voxels.min() == -1000.0
    normalized = crop_or_pad(Volume(np.ones((2, 2, 2)), units="normalized"), 4, (0.5, 0.5, 0.5))
    assert set(np.unique(normalized.voxels)) == {0.0, 1.0}
    labels = crop_or_pad(LabelMap(np.full((2, 2, 2), 3)), 4, (0.5, 0.5, 0.5))
    assert set(np.unique(labels.voxels)) == {0, 3}


def test_window_fully_outside_is_all_background():
    out = crop_or_pad(Volume(np.zeros((4, 4, 4))), 2, (40.0, 40.0, 40.0))
    assert out.dims == (2, 2, 2)
    np.testing.assert_array_equal(out.voxels, -1000.0)


def test_crop_preserves_physical_com_when_nothing_is_removed():
    voxels = np.zeros((10, 10, 10), dtype=np.uint8)
    voxels[3:6, 4:7, 2:5] = 1
    mask = BinaryMask(voxels, (1.5, 1.5, 1.5), (-3.0, 0.0, 2.0))
    cropped = crop_or_pad(mask, 6, mask_center_of_mass(mask))
    assert cropped.count == mask.count
    np.testing.assert_allclose(physical_center_of_mass(cropped), physical_center_of_mass(mask))
    padded = crop_or_pad(mask, 16, mask_center_of_mass(mask))
    np.testing.assert_allclose(physical_center_of_mass(padded), physical_center_of_mass(mask))


def test_com_of_empty_mask_raises():
    with pytest.raises(EmptyMaskError):
        mask_center_of_mass(BinaryMask(np.zeros((2, 2, 2))))
