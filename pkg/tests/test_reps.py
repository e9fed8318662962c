import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ibflow.effdim import d_eff_of_data
from ibflow.errors import DumpFormatError, IBFlowError
from ibflow.reps import (EncoderSpec, RepresentationSet, SequenceDataset, cross_cov_nonsingular, cross_covariance,
                         encode_backward, encode_bidir, encode_unidir, gaussian_mi, gen_gaussian_pair,
                         gen_layered_gaussian, gen_regression_task, gen_sequence_task, load_representation_dump,
                         repr_diff_stats, singular_values, spectral_trial, write_representation_dump)


class TestGaussianPair:
    def test_independent(self):
        assert gen_gaussian_pair(100, 1, 0.0, seed=0).true_mi == 0.0

    def test_half_correlation(self):
        assert gen_gaussian_pair(100, 1, 0.5, seed=0).true_mi == pytest.approx(0.1438, abs=5e-5)

    def test_two_dimensions(self):
        # 1.6608 is twice the rounded 0.8304; the exact value is 1.66073
        assert gaussian_mi(0.9, 2) == pytest.approx(-math.log(1 - 0.81), rel=1e-15)
        assert gaussian_mi(0.9, 2) == pytest.approx(1.6608, abs=1e-4)
        assert gaussian_mi(0.9, 2) == pytest.approx(2 * gaussian_mi(0.9, 1), rel=1e-15)

    def test_empirical_correlation(self):
        b = gen_gaussian_pair(50_000, 3, 0.7, seed=1)
        for k in range(3):
            assert np.corrcoef(b.a[:, k], b.b[:, k])[0, 1] == pytest.approx(0.7, abs=0.01)

    @pytest.mark.parametrize("rho", [1.0, -1.0, 1.5])
    def test_rejects_perfect_correlation(self, rho):
        with pytest.raises(IBFlowError):
            gen_gaussian_pair(10, 1, rho, seed=0)


class TestSequenceTask:
    def test_xnor_at_minimal_size(self):
        ds = gen_sequence_task(200, 2, 2, seed=0)
        xnor = (ds.tokens[:, 0] == ds.tokens[:, 1]).astype(float)
        np.testing.assert_array_equal(ds.labels[:, 0], xnor)

    def test_balanced(self):
        assert abs(gen_sequence_task(20_000, 5, 6, seed=1).labels.mean() - 0.5) <= 0.02

    def test_deterministic(self):
        a, b = gen_sequence_task(50, 4, 3, seed=9), gen_sequence_task(50, 4, 3, seed=9)
        np.testing.assert_array_equal(a.tokens, b.tokens)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_one_hot(self):
        ds = SequenceDataset(np.array([[0, 2], [1, 0]]), np.zeros((2, 1)), 3)
        np.testing.assert_array_equal(ds.one_hot(), [[1, 0, 0, 0, 0, 1], [0, 1, 0, 1, 0, 0]])

    def test_rejects_tiny(self):
        with pytest.raises(IBFlowError):
            gen_sequence_task(10, 1, 2, seed=0)


class TestEncoders:
    def test_bidir_width(self):
        ds = gen_sequence_task(30, 4, 3, seed=0)
        spec = EncoderSpec(3, 4, rep_dim=5)
        assert encode_bidir(ds, spec).shape[1] == 2 * encode_unidir(ds, spec).shape[1] == 10

    def test_palindromes_read_the_same_both_ways(self):
        tokens = np.array([[0, 1, 1, 0], [2, 0, 0, 2], [1, 2, 2, 1]])
        ds = SequenceDataset(tokens, np.zeros((3, 1)), 3)
        spec = EncoderSpec(3, 4, seed=5)
        np.testing.assert_array_equal(encode_unidir(ds, spec), encode_backward(ds, spec))

    def test_forward_ignores_the_suffix(self):
        ds = gen_sequence_task(50, 5, 4, seed=2)
        spec = EncoderSpec(4, 5, seed=2)
        changed = SequenceDataset(ds.tokens.copy(), ds.labels, ds.vocab)
        changed.tokens[:, 3:] = (changed.tokens[:, 3:] + 1) % 4
        np.testing.assert_array_equal(encode_unidir(ds, spec, t_star=3), encode_unidir(changed, spec, t_star=3))

    def test_mismatched_spec(self):
        with pytest.raises(IBFlowError):
            encode_unidir(gen_sequence_task(5, 4, 2, seed=0), EncoderSpec(2, 5))

    def test_cross_covariance_nonsingular_on_random_data(self):
        ds = gen_sequence_task(5000, 4, 4, seed=3)
        spec = EncoderSpec(4, 4, seed=3)
        c = cross_covariance(encode_backward(ds, spec), encode_unidir(ds, spec))
        assert np.abs(np.linalg.eigvals(c)).max() > 1e-6
        assert cross_cov_nonsingular(encode_backward(ds, spec), encode_unidir(ds, spec))

    def test_singular_values_match_numpy(self, rng):
        m = rng.standard_normal((5, 3))
        np.testing.assert_allclose(singular_values(m), np.linalg.svd(m, compute_uv=False), atol=1e-12)

    def test_spectral_ordering_on_100_draws(self):
        checked = 0
        for seed in range(100):
            r = spectral_trial(seed)
            if r["nonsingular"]:
                checked += 1
                assert r["d_eff_bidir"] >= r["d_eff_fwd"], r
        assert checked >= 50


class TestReprDiff:
    def test_identical(self, rng):
        z = rng.standard_normal((20, 3))
        stats = repr_diff_stats(z, z)
        assert stats["mean_sq_diff"] == 0.0 and stats["identity_residual"] == 0.0

    def test_hand_case(self):
        stats = repr_diff_stats([0.0, 2.0], [1.0, 1.0])
        assert stats == {"mean_sq_diff": 1.0, "tr_cov1": 1.0, "tr_cov2": 0.0, "tr_crosscov": 0.0,
                         "mean_diff_norm_sq": 0.0, "identity_residual": 0.0}

    def test_independent_cross_term(self):
        rng = np.random.default_rng(11)
        stats = repr_diff_stats(rng.standard_normal((50_000, 1)), rng.standard_normal((50_000, 1)))
        assert abs(stats["tr_crosscov"]) <= 0.03

    def test_shape_mismatch(self):
        with pytest.raises(IBFlowError):
            repr_diff_stats(np.zeros((3, 2)), np.zeros((3, 3)))

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**31), n=st.integers(2, 200), d=st.integers(1, 8),
           shift=st.floats(-100, 100), scale=st.floats(1e-3, 1e3))
    def test_identity_residual(self, seed, n, d, shift, scale):
        rng = np.random.default_rng(seed)
        z1 = scale * rng.standard_normal((n, d)) + shift
        z2 = 0.5 * z1 + rng.standard_normal((n, d)) - shift
        stats = repr_diff_stats(z1, z2)
        assert stats["identity_residual"] < 1e-9 * max(stats["mean_sq_diff"], 1e-300)


class TestSynthetic:
    def test_layered_gaussian_shapes(self):
        reps = gen_layered_gaussian(n=100, d_x=3, n_layers=4, d_y=2, seed=0)
        assert len(reps.layers) == 4 and reps.y.shape == (100, 2)
        assert all(z.shape == (100, 3) for z in reps.layers)

    def test_layers_get_noisier(self):
        reps = gen_layered_gaussian(n=5000, n_layers=3, seed=1)
        resid = [np.linalg.lstsq(reps.x, z, rcond=None)[1].sum() for z in reps.layers]
        assert resid[0] < resid[1] < resid[2]

    def test_regression_task(self):
        reps = gen_regression_task(200, 4, 7, n_layers=2, seed=0)
        assert reps.y.shape == (200, 7) and len(reps.layers) == 2

    def test_representation_set_validation(self):
        with pytest.raises(IBFlowError):
            RepresentationSet(np.zeros((4, 1)), [], np.zeros((4, 1)))
        with pytest.raises(IBFlowError):
            RepresentationSet(np.zeros((4, 1)), [np.zeros((3, 1))], np.zeros((4, 1)))


def _write(path, text):
    path.write_text(text, encoding="utf-8")


class TestDump:
    def _basic(self, tmp_path, layer_rows=3, y_kind="regression", y_text="y\n1\n0\n2\n"):
        _write(tmp_path / "x.csv", "a,b\n1,2\n3,4\n5,6\n")
        _write(tmp_path / "layer_0.csv", "z0\n" + "".join(f"{k}.5\n" for k in range(layer_rows)))
        _write(tmp_path / "y.csv", y_text)
        manifest = {"x": "x.csv", "y": "y.csv", "layers": ["layer_0.csv"], "y_kind": y_kind}
        _write(tmp_path / "manifest.json", json.dumps(manifest))
        return tmp_path / "manifest.json"

    def test_happy_path(self, tmp_path):
        reps = load_representation_dump(self._basic(tmp_path))
        np.testing.assert_array_equal(reps.x, [[1, 2], [3, 4], [5, 6]])
        assert reps.layers[0].shape == (3, 1)

    def test_short_layer_names_file(self, tmp_path):
        with pytest.raises(DumpFormatError, match="layer_0.csv"):
            load_representation_dump(self._basic(tmp_path, layer_rows=2))

    def test_non_numeric_cell_names_line(self, tmp_path):
        manifest = self._basic(tmp_path)
        _write(tmp_path / "x.csv", "a,b\n1,2\n3,oops\n5,6\n")
        with pytest.raises(DumpFormatError, match=r"x.csv:3"):
            load_representation_dump(manifest)

    def test_missing_file(self, tmp_path):
        manifest = self._basic(tmp_path)
        (tmp_path / "y.csv").unlink()
        with pytest.raises(DumpFormatError, match="y.csv"):
            load_representation_dump(manifest)
        with pytest.raises(DumpFormatError, match="nope.json"):
            load_representation_dump(tmp_path / "nope.json")

    def test_classification_labels_one_hot(self, tmp_path):
        reps = load_representation_dump(self._basic(tmp_path, y_kind="classification"))
        np.testing.assert_array_equal(reps.y, [[0, 1, 0], [1, 0, 0], [0, 0, 1]])
        with pytest.raises(DumpFormatError):
            load_representation_dump(self._basic(tmp_path, y_kind="classification", y_text="y\n1.5\n0\n1\n"))

    @pytest.mark.parametrize("y_kind", ["regression", "classification"])
    def test_round_trip(self, tmp_path, y_kind):
        reps = gen_layered_gaussian(n=50, d_x=3, n_layers=2, seed=4)
        if y_kind == "classification":
            labels = (reps.y[:, 0] > 0).astype(int)
            reps = RepresentationSet(reps.x, reps.layers, np.eye(2)[labels], "classification")
        back = load_representation_dump(write_representation_dump(reps, tmp_path))
        np.testing.assert_array_equal(back.x, reps.x)
        np.testing.assert_array_equal(back.y, reps.y)
        for a, b in zip(back.layers, reps.layers):
            np.testing.assert_array_equal(a, b)
        assert back.y_kind == y_kind


def test_one_hot_target_dimension():
    # d_eff of a balanced two-class one-hot target: the centered columns are
    # perfectly anti-correlated, so the spectrum is rank one
    y = np.eye(2)[np.arange(100) % 2]
    assert d_eff_of_data(y) == pytest.approx(1.0)
    assert math.isfinite(d_eff_of_data(np.eye(3)[np.arange(99) % 3]))
