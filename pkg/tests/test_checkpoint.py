import zipfile

import pytest
import torch

from kgtext.checkpoint import Checkpoint, CheckpointError, checkpoint_bytes, load_checkpoint, save_checkpoint
from kgtext.trainer import build_model

from conftest import subset


def _logits(model, inst):
    model.eval()
    ex = model.prepare(inst)
    with torch.no_grad():
        batch = model.encode_graphs([ex])
        dec = torch.tensor([[model.vocab.bos_id] + ex.target_ids[:-1]])
        return model.seq_model.decode(dec, batch.memory, batch.memory_pad)[0]


@pytest.mark.parametrize("precision", ["float32", "float64"])
def test_roundtrip_is_byte_identical(tmp_path, synthetic16, tiny_config, precision):
    from dataclasses import replace
    cfg = replace(tiny_config, precision=precision)
    model = build_model(cfg, synthetic16)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(Checkpoint(model, cfg.to_dict(), step=7, seed=3, rng_state=b"\x01\x02"), p1)
    loaded = load_checkpoint(p1)
    save_checkpoint(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert loaded.step == 7 and loaded.seed == 3 and loaded.rng_state == b"\x01\x02"
    assert torch.equal(_logits(model, synthetic16[0]), _logits(loaded.model, synthetic16[0]))
    assert next(loaded.model.parameters()).dtype == cfg.dtype


def test_archive_layout(synthetic16, tiny_config, tmp_path):
    model = build_model(tiny_config, synthetic16)
    p = tmp_path / "m.ckpt"
    save_checkpoint(Checkpoint(model, tiny_config.to_dict()), p)
    with zipfile.ZipFile(p) as zf:
        names = zf.namelist()
        assert names[0] == "manifest.json"
        assert all(i.date_time == (1980, 1, 1, 0, 0, 0) for i in zf.infolist())
        import json
        manifest = json.loads(zf.read("manifest.json"))
    sections = {e["section"] for e in manifest["parameters"]}
    assert sections == {"graph_encoder", "seq_model", "copy_gate", "relation_classifier"}
    assert all(e["dtype"] == "<f4" for e in manifest["parameters"])
    assert manifest["config"]["lr"] == tiny_config.lr


def test_bytes_are_deterministic(synthetic16, tiny_config):
    a = build_model(tiny_config, synthetic16)
    b = build_model(tiny_config, synthetic16)
    assert checkpoint_bytes(Checkpoint(a, {})) == checkpoint_bytes(Checkpoint(b, {}))


def test_bad_archives_rejected(tmp_path):
    p = tmp_path / "x.ckpt"
    p.write_bytes(b"not a zip")
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
    with zipfile.ZipFile(p, "w") as zf:
        zf.writestr("manifest.json", '{"format": "other"}')
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
