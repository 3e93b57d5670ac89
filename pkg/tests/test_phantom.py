import numpy as np
import pytest
from pydantic import ValidationError

from dcc_segmenter.phantom.corruption import corrupt_labels
from dcc_segmenter.phantom.dataset import INDEX_FILE, build_cases, load_dataset, read_index, write_dataset
from dcc_segmenter.phantom.generator import (
    body_part_scores,
    ellipsoid_mask,
    generate_phantom,
    split_seed,
    volume_plan,
)
from dcc_segmenter.phantom.specs import DatasetSpec, Ellipsoid, OrganSpec, Volume, default_dataset_spec
from dcc_segmenter.phantom.volume_io import read_volume, write_volume
from dcc_segmenter.preprocess.pipeline import WINDOW_HI, WINDOW_LO
from dcc_segmenter.trainer.metrics import dice_score
from dcc_segmenter.utils.errors import PhantomError, VolumeFormatError


def test_split_seed_is_xor():
    assert split_seed(7, 0) == 7
    assert split_seed(7, 3) == 4
    assert split_seed(0, 5) == 5


def test_volume_plan_is_phase_major(tiny_spec):
    assert volume_plan(tiny_spec) == [(0, "NC", 0), (1, "NC", 1), (2, "CE", 0), (3, "CE", 1)]


def test_generate_is_deterministic(tiny_spec):
    first = generate_phantom(tiny_spec, seed=3)
    second = generate_phantom(tiny_spec, seed=3)
    assert len(first) == 4
    for (a, _), (b, _) in zip(first, second):
        assert np.array_equal(a.voxels, b.voxels)
        assert np.array_equal(a.labels, b.labels)


def test_different_seeds_change_noise_not_geometry(tiny_spec):
    (a, _), = generate_phantom(tiny_spec, seed=1)[:1]
    (b, _), = generate_phantom(tiny_spec, seed=2)[:1]
    assert np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.voxels, b.voxels)


def test_labels_follow_ellipsoids(tiny_spec):
    volume, oracle = generate_phantom(tiny_spec, seed=0)[0]
    for organ in tiny_spec.organs:
        expected = ellipsoid_mask(organ.shape, tiny_spec.dims)
        assert np.array_equal(volume.labels == organ.class_id, expected)
    assert np.array_equal(oracle.mask, volume.labels)
    assert oracle.source == "oracle"


def test_organ_intensity_tracks_phase(tiny_spec):
    cohort = generate_phantom(tiny_spec, seed=0)
    nc, ce = cohort[0][0], cohort[2][0]
    assert nc.phase == "NC" and ce.phase == "CE"
    kidney_nc = nc.voxels[nc.labels == 1].mean()
    kidney_ce = ce.voxels[ce.labels == 1].mean()
    assert abs(kidney_nc - 20.0) < 2.0
    assert abs(kidney_ce - 200.0) < 2.0


def test_body_outline_and_spine(tiny_spec):
    volume, _ = generate_phantom(tiny_spec, seed=0)[0]
    assert volume.voxels[0, 0, 0] == pytest.approx(-1000.0)
    assert volume.voxels.max() >= 700.0 - 1e-3


def test_single_organ_spec_generates_mask_and_volume():
    spec = DatasetSpec(
        organs=[
            OrganSpec(
                class_id=1,
                shape=Ellipsoid(center=(0.5, 0.5, 0.5), semi_axes=(0.25, 0.25, 0.25)),
                intensity_by_phase={"NC": 40.0, "CE": 180.0},
            )
        ],
        dims=(32, 32, 32),
        volumes_per_phase=1,
    )
    cohort = generate_phantom(spec, seed=0)
    assert len(cohort) == 2
    volume = cohort[1][0]
    assert set(np.unique(volume.labels)) == {0, 1}
    assert np.all(volume.voxels[volume.labels == 1] == 180.0)


def test_overlapping_organs_are_rejected():
    shape = Ellipsoid(center=(0.5, 0.5, 0.5), semi_axes=(0.2, 0.2, 0.2))
    spec = DatasetSpec(
        organs=[
            OrganSpec(class_id=1, shape=shape, intensity_by_phase={"NC": 0.0, "CE": 1.0}),
            OrganSpec(class_id=2, shape=shape, intensity_by_phase={"NC": 0.0, "CE": 1.0}),
        ],
        dims=(16, 16, 16),
        volumes_per_phase=1,
    )
    with pytest.raises(PhantomError) as excinfo:
        generate_phantom(spec, seed=0)
    assert excinfo.value.code == "phantom.overlap"
    assert "1/2" in str(excinfo.value)


def test_negative_seed_is_rejected(tiny_spec):
    with pytest.raises(PhantomError):
        generate_phantom(tiny_spec, seed=-1)


def test_spec_validation():
    shape = Ellipsoid(center=(0.5, 0.5, 0.5), semi_axes=(0.2, 0.2, 0.2))
    with pytest.raises(ValidationError, match="unknown phase tag"):
        DatasetSpec(organs=[OrganSpec(class_id=1, shape=shape, intensity_by_phase={"XX": 1.0})], phases=["XX"])
    with pytest.raises(ValidationError):
        DatasetSpec(organs=[])
    with pytest.raises(ValidationError):
        DatasetSpec(organs=[OrganSpec(class_id=1, shape=shape, intensity_by_phase={"NC": 1.0})])
    with pytest.raises(ValidationError):
        Ellipsoid(center=(1.5, 0.5, 0.5), semi_axes=(0.2, 0.2, 0.2))


def test_default_spec_generates_without_overlap():
    spec = default_dataset_spec()
    assert spec.class_ids == [1, 2, 3, 4]
    cohort = generate_phantom(spec, seed=0)
    assert len(cohort) == len(spec.phases) * spec.volumes_per_phase
    for volume, _ in cohort:
        assert set(np.unique(volume.labels)) == {0, 1, 2, 3, 4}


def test_body_part_scores_are_linear(tiny_spec):
    scores = body_part_scores(tiny_spec)
    assert scores.shape == (16,)
    assert scores[0] == -5.0 and scores[-1] == 6.0
    assert np.allclose(np.diff(scores), 11.0 / 15.0)


def test_zero_corruption_returns_oracle(tiny_spec):
    volume, _ = generate_phantom(tiny_spec, seed=0)[0]
    coarse = corrupt_labels(volume.labels, 0.0, seed=5)
    assert np.array_equal(coarse.mask, volume.labels)
    assert coarse.source == "oracle"


def test_corruption_degrades_without_new_classes(tiny_spec):
    volume, _ = generate_phantom(tiny_spec, seed=0)[0]
    coarse = corrupt_labels(volume.labels, 0.2, seed=5)
    again = corrupt_labels(volume.labels, 0.2, seed=5)
    assert np.array_equal(coarse.mask, again.mask)
    assert coarse.source == "corrupted"
    assert set(np.unique(coarse.mask)) <= set(np.unique(volume.labels))
    assert not np.array_equal(coarse.mask, volume.labels)
    for organ in (1, 2):
        assert 0.3 < dice_score(coarse.mask, volume.labels, organ) < 1.0


@pytest.mark.parametrize("seed", range(10))
def test_corrupted_cube_keeps_moderate_overlap(seed):
    labels = np.zeros((20, 20, 20), dtype=np.uint8)
    labels[5:15, 5:15, 5:15] = 1
    coarse = corrupt_labels(labels, 0.2, seed=seed)
    assert set(np.unique(coarse.mask)) <= {0, 1}
    assert 0.5 < dice_score(coarse.mask, labels, 1) < 1.0


def test_default_spec_has_varying_and_invariant_organs():
    spec = default_dataset_spec()
    width = WINDOW_HI - WINDOW_LO
    gaps = {
        class_id: abs(spec.organ(class_id).intensity_by_phase["CE"] - spec.organ(class_id).intensity_by_phase["NC"]) / width
        for class_id in spec.class_ids
    }
    assert [c for c, gap in gaps.items() if gap >= 0.4] == [1, 2]
    assert [c for c, gap in gaps.items() if gap <= 0.05] == [3, 4]
    assert spec.corruption_rate == 0.1
    with pytest.raises(KeyError):
        spec.organ(9)


def test_corruption_rate_out_of_range(tiny_spec):
    labels = np.zeros((4, 4, 4), dtype=np.uint8)
    with pytest.raises(PhantomError):
        corrupt_labels(labels, 1.0, seed=0)
    with pytest.raises(PhantomError):
        corrupt_labels(labels, -0.1, seed=0)


def test_volume_round_trip_is_bit_exact(tmp_path, tiny_spec):
    volume, _ = generate_phantom(tiny_spec, seed=4)[2]
    write_volume(volume, tmp_path / "case")
    loaded = read_volume(tmp_path / "case.vol")
    assert loaded.voxels.tobytes() == volume.voxels.tobytes()
    assert np.array_equal(loaded.labels, volume.labels)
    assert loaded.phase == "CE"
    assert loaded.stage == "raw"
    assert loaded.spacing_mm == volume.spacing_mm


def test_payload_is_x_fastest(tmp_path):
    voxels = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    volume = Volume(voxels=voxels, labels=np.zeros((2, 3, 4), np.uint8), spacing_mm=(1.0, 1.0, 1.0), phase="NC")
    write_volume(volume, tmp_path / "v")
    raw = np.frombuffer((tmp_path / "v.vol").read_bytes(), dtype="<f4")
    assert raw[0] == voxels[0, 0, 0]
    assert raw[1] == voxels[1, 0, 0]
    assert raw[2] == voxels[0, 1, 0]


def test_truncated_payload_is_rejected(tmp_path, tiny_spec):
    volume, _ = generate_phantom(tiny_spec, seed=0)[0]
    vol_path = write_volume(volume, tmp_path / "case")
    vol_path.write_bytes(vol_path.read_bytes()[:-2])
    with pytest.raises(VolumeFormatError) as excinfo:
        read_volume(vol_path)
    assert excinfo.value.code == "volume.payload_length"

    vol_path.write_bytes(b"\x00" * 16)
    with pytest.raises(VolumeFormatError) as excinfo:
        read_volume(vol_path)
    assert excinfo.value.code == "volume.dims_mismatch"


def test_unknown_phase_in_sidecar(tmp_path, tiny_spec):
    volume, _ = generate_phantom(tiny_spec, seed=0)[0]
    write_volume(volume, tmp_path / "case")
    sidecar = tmp_path / "case.json"
    sidecar.write_text(sidecar.read_text().replace('"NC"', '"XX"'))
    with pytest.raises(VolumeFormatError) as excinfo:
        read_volume(tmp_path / "case")
    assert excinfo.value.code == "volume.unknown_phase"


def test_dataset_round_trip(tmp_path, tiny_spec):
    spec = tiny_spec.model_copy(update={"corruption_rate": 0.1})
    index = write_dataset(spec, seed=9, out_dir=tmp_path)
    assert (tmp_path / INDEX_FILE).exists()
    assert [entry.name for entry in index.entries] == ["nc_000", "nc_001", "ce_000", "ce_001"]
    assert read_index(tmp_path).seed == 9

    loaded = load_dataset(tmp_path)
    built = build_cases(spec, seed=9)
    for a, b in zip(loaded, built):
        assert a.name == b.name
        assert np.array_equal(a.volume.voxels, b.volume.voxels)
        assert np.array_equal(a.coarse.mask, b.coarse.mask)
        assert np.array_equal(a.scores, b.scores)
        assert a.coarse.source == "corrupted"


def test_missing_dataset_index(tmp_path):
    with pytest.raises(VolumeFormatError):
        load_dataset(tmp_path)
