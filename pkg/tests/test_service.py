"""HTTP service contract: endpoints, error codes, cross-interface equality."""

import base64
import io
import json
import math

import numpy as np
import pytest
from fastapi.testclient import TestClient

from cips.service import create_app


@pytest.fixture(scope="module")
def client(small_ckpt):
    return TestClient(create_app(ckpt_path=small_ckpt))


@pytest.fixture(scope="module")
def cyl_client(cyl_ckpt):
    return TestClient(create_app(ckpt_path=cyl_ckpt))


def synth(client, **payload):
    return client.post("/synthesize", json=payload)


# -- health / model ------------------------------------------------------------

def test_healthz(client):
    body = client.get("/healthz").json()
    assert body == {"status": "ok", "model_loaded": True}


def test_healthz_without_model():
    c = TestClient(create_app())
    assert c.get("/healthz").json() == {"status": "ok", "model_loaded": False}


def test_model_info(client):
    body = client.get("/model").json()
    assert body["resolution"] == [8, 8]
    assert body["counts"]["total"] > 0
    assert body["config"]["width"] == 16
    assert len(body["config_hash"]) == 16


def test_model_503_before_load():
    c = TestClient(create_app())
    assert c.get("/model").status_code == 503
    assert c.post("/map", json={"seed": 1}).status_code == 503
    assert c.post("/synthesize", json={"style": {"seed": 1}}).status_code == 503


def test_model_counts_match_cli_params(client, small_ckpt):
    from cips.generator import Generator
    gen = Generator.load(small_ckpt)
    assert client.get("/model").json()["counts"] == gen.count_params()


# -- /map ------------------------------------------------------------------------

def test_map_deterministic(client):
    a = client.post("/map", json={"seed": 7}).json()
    b = client.post("/map", json={"seed": 7}).json()
    assert a == b and len(a["w"]) == 16


def test_map_explicit_z(client):
    z = [0.5] * 16
    w = client.post("/map", json={"z": z}).json()["w"]
    assert len(w) == 16


def test_map_wrong_length_400(client):
    r = client.post("/map", json={"z": [1.0, 2.0]})
    assert r.status_code == 400
    assert "length 16" in r.json()["detail"]


def test_map_needs_exactly_one_input(client):
    assert client.post("/map", json={}).status_code == 400
    assert client.post("/map", json={"seed": 1, "z": [0.0] * 16}).status_code == 400


def test_map_identity_when_mapping_depth_zero(tmp_path):
    from conftest import small_config
    from cips.generator import Generator
    path = tmp_path / "id.ckpt"
    Generator(small_config(mapping_depth=0), seed=0).save(path)
    c = TestClient(create_app(ckpt_path=str(path)))
    z = list(np.linspace(-1.0, 1.0, 16))
    w = c.post("/map", json={"z": z}).json()["w"]
    assert np.array_equal(np.asarray(w), np.asarray(z))


# -- /synthesize: modes and grids ------------------------------------------------

def test_full_png_matches_cli_sample(client, small_ckpt, tmp_path):
    from click.testing import CliRunner
    from cips.cli import main

    out = tmp_path / "s.png"
    res = CliRunner().invoke(main, ["sample", "--ckpt", small_ckpt,
                                    "--seed", "7", "--out", str(out)])
    assert res.exit_code == 0, res.output
    r = synth(client, style={"seed": 7}, grid={"kind": "full"}, mode="png")
    assert r.status_code == 200
    assert r.headers["content-type"] == "image/png"
    assert r.content == out.read_bytes()


def test_identical_requests_identical_bytes(client):
    req = dict(style={"seed": 3}, grid={"kind": "full"}, mode="png")
    assert synth(client, **req).content == synth(client, **req).content


def test_concurrent_identical_requests(client):
    from concurrent.futures import ThreadPoolExecutor

    req = dict(style={"seed": 5}, grid={"kind": "full"}, mode="png")
    with ThreadPoolExecutor(max_workers=4) as pool:
        outs = list(pool.map(lambda _: synth(client, **req).content, range(8)))
    assert all(o == outs[0] for o in outs)


def test_sparse_budget_exact(client):
    r = synth(client, style={"seed": 0},
              grid={"kind": "foveated", "fraction": 0.25}, mode="sparse-json")
    obj = json.loads(r.content)
    assert len(obj["pixels"]) == math.ceil(0.25 * 64)
    assert obj["domain"] == {"H": 8, "W": 8}


def test_sparse_consistency_with_full_grid(client):
    """Sparse pixels bit-equal the same pixels of a full-grid synthesis."""
    r = synth(client, style={"seed": 2},
              grid={"kind": "foveated", "fraction": 0.3, "rng_seed": 4},
              mode="sparse-json")
    sparse = json.loads(r.content)
    rf = synth(client, style={"seed": 2}, grid={"kind": "full"},
               mode="sparse-json")
    full = json.loads(rf.content)
    lookup = {(p["x"], p["y"]): p["rgb"] for p in full["pixels"]}
    for p in sparse["pixels"]:
        assert lookup[(p["x"], p["y"])] == p["rgb"]


def test_patch_grid_png_shape(client):
    r = synth(client, style={"seed": 0},
              grid={"kind": "patch", "u": 1, "v": 1, "K": 3, "sigma": 2},
              mode="png")
    from PIL import Image
    img = Image.open(io.BytesIO(r.content))
    assert img.size == (3, 3)


def test_dense_grid_png_shape(client):
    r = synth(client, style={"seed": 0}, grid={"kind": "dense", "factor": 2},
              mode="png")
    from PIL import Image
    assert Image.open(io.BytesIO(r.content)).size == (16, 16)


def test_cylinder_grid(cyl_client):
    r = synth(cyl_client, style={"seed": 0},
              grid={"kind": "cylinder", "crop_w": 5, "crop_h": 8, "x0": 3},
              mode="png")
    from PIL import Image
    assert Image.open(io.BytesIO(r.content)).size == (5, 8)


def test_cylinder_wrap_invariance(cyl_client):
    a = synth(cyl_client, style={"seed": 1},
              grid={"kind": "cylinder", "crop_w": 4, "crop_h": 8, "x0": 2},
              mode="png")
    b = synth(cyl_client, style={"seed": 1},
              grid={"kind": "cylinder", "crop_w": 4, "crop_h": 8, "x0": 2 + 12},
              mode="png")
    assert a.content == b.content


def test_cylinder_rejected_on_cartesian(client):
    r = synth(client, style={"seed": 0}, grid={"kind": "cylinder"})
    assert r.status_code == 400


def test_png_base64_mode(client):
    r = synth(client, style={"seed": 9}, grid={"kind": "full"}, mode="png-base64")
    body = r.json()
    assert body["H"] == 8 and body["W"] == 8 and body["n_synthesized"] == 64
    png = base64.b64decode(body["png_base64"])
    direct = synth(client, style={"seed": 9}, grid={"kind": "full"}, mode="png")
    assert png == direct.content


def test_foveated_png_is_filled(client):
    r = synth(client, style={"seed": 0},
              grid={"kind": "foveated", "fraction": 0.1}, mode="png")
    from PIL import Image
    assert Image.open(io.BytesIO(r.content)).size == (8, 8)


# -- styles: blend and mix --------------------------------------------------------

def test_blend_alpha_zero_equals_single_style(client):
    blended = synth(client, style={"pair": {"a": {"seed": 4}, "b": {"seed": 5},
                                            "blend": {"mode": "constant",
                                                      "value": 0.0}}},
                    grid={"kind": "full"}, mode="png")
    single = synth(client, style={"seed": 4}, grid={"kind": "full"}, mode="png")
    assert blended.content == single.content


def test_blend_alpha_one_equals_other_style(client):
    blended = synth(client, style={"pair": {"a": {"seed": 4}, "b": {"seed": 5},
                                            "blend": {"mode": "constant",
                                                      "value": 1.0}}},
                    grid={"kind": "full"}, mode="png")
    single = synth(client, style={"seed": 5}, grid={"kind": "full"}, mode="png")
    assert blended.content == single.content


def test_blend_requires_two_styles(client):
    r = synth(client, style={"pair": {"a": {"seed": 1}}}, grid={"kind": "full"})
    assert r.status_code == 400
    assert "'a' and 'b'" in r.json()["detail"]


def test_explicit_w_roundtrip(client):
    w = client.post("/map", json={"seed": 11}).json()["w"]
    via_w = synth(client, style={"w": w}, grid={"kind": "full"}, mode="png")
    via_seed = synth(client, style={"seed": 11}, grid={"kind": "full"}, mode="png")
    assert via_w.content == via_seed.content


def test_mix_all_blocks_equals_second_style(client):
    mixed = synth(client, style={"seed": 1},
                  mix={"blocks": [1, 2], "style": {"seed": 2}},
                  grid={"kind": "full"}, mode="png")
    plain = synth(client, style={"seed": 2}, grid={"kind": "full"}, mode="png")
    assert mixed.content == plain.content


def test_mix_bad_blocks_400(client):
    r = synth(client, style={"seed": 1},
              mix={"blocks": [9], "style": {"seed": 2}}, grid={"kind": "full"})
    assert r.status_code == 400


# -- errors -----------------------------------------------------------------------

def test_unknown_grid_kind_400(client):
    r = synth(client, style={"seed": 0}, grid={"kind": "hex"})
    assert r.status_code == 400
    assert "unknown grid kind" in r.json()["detail"]


def test_invalid_patch_400(client):
    r = synth(client, style={"seed": 0},
              grid={"kind": "patch", "u": 5, "v": 0, "K": 8, "sigma": 1})
    assert r.status_code == 400


def test_invalid_fraction_400(client):
    r = synth(client, style={"seed": 0},
              grid={"kind": "foveated", "fraction": 2.0})
    assert r.status_code == 400


def test_missing_style_400(client):
    r = synth(client, grid={"kind": "full"})
    assert r.status_code == 400


def test_bad_mode_400(client):
    r = synth(client, style={"seed": 0}, grid={"kind": "full"}, mode="tiff")
    assert r.status_code == 400


def test_pixel_cap_413(small_ckpt):
    c = TestClient(create_app(ckpt_path=small_ckpt, pixel_cap=100))
    r = c.post("/synthesize", json={"style": {"seed": 0},
                                    "grid": {"kind": "dense", "factor": 2}})
    assert r.status_code == 413
    assert "cap is 100" in r.json()["detail"]


def test_busy_503(small_ckpt):
    c = TestClient(create_app(ckpt_path=small_ckpt, queue_depth=0))
    r = c.post("/synthesize", json={"style": {"seed": 0}, "grid": {"kind": "full"}})
    assert r.status_code == 503
    assert "busy" in r.json()["detail"]


# -- /reload ------------------------------------------------------------------------

def test_reload_swaps_model(small_ckpt, cyl_ckpt):
    c = TestClient(create_app(ckpt_path=small_ckpt))
    assert c.get("/model").json()["config"]["kind"] == "cartesian"
    r = c.post("/reload", json={"ckpt_path": cyl_ckpt})
    assert r.status_code == 200
    assert c.get("/model").json()["config"]["kind"] == "cylindrical"


def test_reload_missing_file_400(client):
    r = client.post("/reload", json={"ckpt_path": "/nonexistent.ckpt"})
    assert r.status_code == 400
    # old model still serves
    assert client.get("/model").status_code == 200


def test_reload_enables_empty_service(small_ckpt):
    c = TestClient(create_app())
    assert c.get("/model").status_code == 503
    assert c.post("/reload", json={"ckpt_path": small_ckpt}).status_code == 200
    assert c.get("/model").status_code == 200
