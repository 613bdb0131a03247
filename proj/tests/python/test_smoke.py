import math

import numpy as np
import pytest

import specrec


def test_table_shapes():
    rows = dict(specrec.infer_shapes("paper"))
    assert rows["conv1"] == [64, 26, 128, 128]
    assert rows["conv5_x"] == [512, 2, 8, 8]
    assert rows["fc"] == [204]


def test_csse_limits():
    rng = np.random.default_rng(3)
    y, yhat = rng.random(50).tolist(), rng.random(50).tolist()
    assert specrec.csse(y, yhat, 1.0) == specrec.mse(y, yhat)
    assert specrec.csse(y, yhat, 0.0) == specrec.roughness(yhat)
    assert specrec.roughness([0.0, 1.0, 0.0, 1.0]) == pytest.approx(4.0)
    assert specrec.roughness([2.0 * i + 1.0 for i in range(20)]) == pytest.approx(0.0, abs=1e-12)


def test_smooth_zero_lambda_is_identity():
    y = [math.sin(i / 3.0) for i in range(40)]
    assert specrec.smooth(y, 0.0) == y
    assert specrec.roughness(specrec.smooth(y, 100.0)) < specrec.roughness(y)


def test_illuminant_unit_max():
    for family in specrec.families():
        values = specrec.gen_illuminant(family, 7)
        assert len(values) == 204
        assert max(values) == pytest.approx(1.0)
    with pytest.raises(ValueError, match="valid"):
        specrec.gen_illuminant("sodium")


def test_normalize_white_panel():
    rng = np.random.default_rng(1)
    illum = 0.2 + rng.random(10)
    dark = 0.01 * rng.random(10)
    cube = np.broadcast_to((illum + dark)[:, None, None], (10, 3, 4)).astype(np.float32)
    refl, clipped, degenerate = specrec.normalize(cube, (illum + dark).tolist(), dark.tolist())
    assert np.abs(refl - 1.0).max() < 1e-6
    assert degenerate == []


def test_cube_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    data = rng.random((5, 6, 7)).astype(np.float32)
    for interleave in ("bsq", "bil", "bip"):
        header = tmp_path / f"c_{interleave}.hdr"
        specrec.write_cube(header, data, interleave=interleave)
        back, wavelengths = specrec.read_cube(header)
        assert np.array_equal(back, data)
        assert len(wavelengths) == 5


def test_missing_cube_is_data_error(tmp_path):
    with pytest.raises(specrec.SpecrecError):
        specrec.read_cube(tmp_path / "absent.hdr")


def test_gradcheck_passes():
    results = specrec.gradcheck(trials=2, seed=5)
    assert results and all(r["passed"] for r in results)


def test_desk_parameter_count():
    assert specrec.parameter_count("desk") == 4_854_236
