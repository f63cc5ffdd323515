import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from critic_bench.data import (
    CORRUPTION_KINDS,
    BadMagicError,
    CorruptionSpec,
    DimensionOverflowError,
    DistributionSpec,
    SampleFormatError,
    SampleSet,
    SpecError,
    TruncatedPayloadError,
    corrupt,
    default_distribution,
    gaussian_mixture,
    load_csv,
    load_samples,
    ring_mixture,
    sample,
    save_csv,
    save_samples,
    split,
)
from critic_bench.rng import derive_seed, make_rng, normal

reals = st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False)
matrices = arrays(float, array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=8), elements=reals)


def test_standard_normal_mixture_mean_near_origin():
    spec = gaussian_mixture([[0.0, 0.0]], [np.eye(2)])
    x = sample(spec, 10_000, seed=7).data
    assert np.all(np.abs(x.mean(axis=0)) < 0.05)


def test_noiseless_ring_on_circle():
    spec = DistributionSpec("ring", 2, {"radius": 1.0, "noise": 0.0})
    x = sample(spec, 100, seed=1).data
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-12)


def test_uniform_box_support():
    spec = DistributionSpec("uniform-box", 2, {"low": [0, 0], "high": [1, 1]})
    x = sample(spec, 5, seed=3).data
    assert np.all((x >= 0) & (x <= 1))


def test_sampling_is_bitwise_deterministic():
    spec = default_distribution()
    a, b = sample(spec, 257, 11), sample(spec, 257, 11)
    assert a.data.tobytes() == b.data.tobytes()
    assert sample(spec, 257, 12).data.tobytes() != a.data.tobytes()


def test_ring8_modes():
    s = sample(ring_mixture(), 8000, 0)
    assert set(np.unique(s.labels)) == set(range(8))
    np.testing.assert_allclose(np.linalg.norm(s.data, axis=1).mean(), 2.0, atol=0.02)


def test_split_roles_and_independence():
    tr, va, te = split(default_distribution(), [20, 10, 10], seed=0)
    assert (tr.role, va.role, te.role) == ("train", "validation", "test")
    assert not np.array_equal(tr.data[:10], te.data)


@pytest.mark.parametrize(
    "kind, params, field",
    [
        ("gaussian-mixture", {"means": [[0.0]], "covs": [[[1.0]]], "weights": [0.5]}, "weights"),
        ("gaussian-mixture", {"means": [[0.0, 0.0]], "covs": [[[1.0, 0.5], [0.4, 1.0]]], "weights": [1.0]}, "covs"),
        ("gaussian-mixture", {"means": [[0.0, 0.0]], "covs": [[[1.0, 2.0], [2.0, 1.0]]], "weights": [1.0]}, "covs"),
        ("gaussian-mixture", {"means": [[0.0], [1.0]], "covs": [[[1.0]], [[1.0]]], "weights": [1.5, -0.5]}, "weights"),
        ("ring", {"radius": -1.0, "noise": 0.0}, "radius"),
        ("uniform-box", {"low": [1.0], "high": [0.0]}, "high"),
    ],
)
def test_invalid_specs_name_field(kind, params, field):
    dim = len(params.get("low", params.get("means", [[0, 0]])[0]))
    with pytest.raises(SpecError, match=field):
        DistributionSpec(kind, dim if kind != "ring" else 2, params)


def test_spec_roundtrip_through_dict():
    spec = default_distribution()
    assert DistributionSpec.from_dict(spec.to_dict()).to_dict() == spec.to_dict()


def test_intensity_shift_definition():
    out = corrupt(SampleSet([[1.0, 1.0]]), CorruptionSpec("intensity-shift", 0.5), 0)
    np.testing.assert_array_equal(out.data, [[1.5, 1.5]])


def test_additive_noise_variance():
    out = corrupt(SampleSet(np.zeros((10_000, 1))), CorruptionSpec("additive-noise", 1.0), 5)
    assert abs(out.data.var() - 1.0) < 0.05


def test_blur_toward_mean():
    x = SampleSet([[0.0, 0.0], [2.0, 4.0]])
    out = corrupt(x, CorruptionSpec("blur-toward-mean", 0.5), 0)
    np.testing.assert_allclose(out.data, [[0.5, 1.0], [1.5, 3.0]])


def test_mode_drop_keeps_count_and_removes_components():
    s = sample(ring_mixture(), 4000, 0)
    out = corrupt(s, CorruptionSpec("mode-drop", 0.5), 1)
    assert out.n == s.n
    assert len(np.unique(out.labels)) == 4
    # every resampled row is a copy of a kept row
    kept = {tuple(r) for r in s.data[np.isin(s.labels, np.unique(out.labels))]}
    assert all(tuple(r) in kept for r in out.data)


def test_mode_drop_needs_labels():
    with pytest.raises(SpecError, match="labels"):
        corrupt(SampleSet(np.zeros((4, 2))), CorruptionSpec("mode-drop", 0.5), 0)


def test_negative_level_rejected():
    with pytest.raises(SpecError, match="level"):
        CorruptionSpec("additive-noise", -0.1)


@given(matrices, st.sampled_from(CORRUPTION_KINDS), st.integers(0, 2**31))
def test_level_zero_is_identity(x, kind, seed):
    s = SampleSet(x, labels=np.zeros(x.shape[0], dtype=int))
    out = corrupt(s, CorruptionSpec(kind, 0.0), seed)
    assert out.data.tobytes() == s.data.tobytes()


@given(matrices, st.sampled_from(["train", "validation", "test"]), st.text(max_size=20))
def test_binary_roundtrip(tmp_path_factory, x, role, label):
    path = tmp_path_factory.mktemp("cbs") / "s.cbs"
    s = SampleSet(x, role, label)
    save_samples(s, path)
    back = load_samples(path)
    assert back == s
    assert back.data.tobytes() == s.data.tobytes()


def test_sampleset_is_immutable():
    s = SampleSet([[1.0]])
    with pytest.raises(ValueError):
        s.data[0, 0] = 2.0
    with pytest.raises(AttributeError):
        s.role = "test"


@pytest.mark.parametrize("bad", [np.zeros((0, 2)), np.zeros((2, 0)), [[np.nan]], [[np.inf]]])
def test_sampleset_invariants(bad):
    with pytest.raises(SpecError):
        SampleSet(bad)


def test_zero_rows_rejected():
    with pytest.raises(SpecError, match="n ≥ 1 violated"):
        SampleSet(np.zeros((0, 3)))


def test_bad_magic(tmp_path):
    p = tmp_path / "s.cbs"
    save_samples(SampleSet([[1.0, 2.0]]), p)
    raw = bytearray(p.read_bytes())
    raw[0:4] = b"XXXX"
    p.write_bytes(bytes(raw))
    with pytest.raises(BadMagicError, match="bad magic"):
        load_samples(p)


def test_truncated_and_trailing(tmp_path):
    p = tmp_path / "s.cbs"
    save_samples(SampleSet(np.ones((3, 2))), p)
    raw = p.read_bytes()
    p.write_bytes(raw[:-1])
    with pytest.raises(TruncatedPayloadError):
        load_samples(p)
    p.write_bytes(raw + b"\0")
    with pytest.raises(SampleFormatError, match="trailing"):
        load_samples(p)


def test_header_dimension_overflow(tmp_path):
    import struct

    p = tmp_path / "s.cbs"
    p.write_bytes(struct.pack("<4sIIBH", b"CBS1", 2**32 - 1, 2**32 - 1, 0, 0))
    with pytest.raises(DimensionOverflowError):
        load_samples(p)


def test_error_kinds_are_distinct():
    kinds = {BadMagicError, DimensionOverflowError, TruncatedPayloadError}
    assert len(kinds) == 3 and all(issubclass(k, SampleFormatError) for k in kinds)


def test_csv_roundtrip_with_and_without_header(tmp_path):
    s = SampleSet(np.array([[1.5, -2.25], [1e-300, 3.0]]))
    for header in (True, False):
        p = tmp_path / f"h{header}.csv"
        save_csv(s, p, header=header)
        assert load_csv(p).data.tobytes() == s.data.tobytes()


def test_csv_rejects_ragged_and_bad_rows(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3\n")
    with pytest.raises(SampleFormatError):
        load_csv(p)
    p.write_text("1,2\n3,abc\n")
    with pytest.raises(SampleFormatError, match=":2"):
        load_csv(p)


def test_rng_streams():
    assert derive_seed(1, "a") != derive_seed(1, "b")
    assert derive_seed(1, "a", 3) == derive_seed(1, "a", 3)
    z = normal(make_rng(0), 200_000)
    assert abs(z.mean()) < 0.01 and abs(z.std() - 1) < 0.01
