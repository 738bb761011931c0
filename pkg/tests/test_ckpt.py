import struct
import zlib

import numpy as np
import pytest

from survae import ckpt, data
from survae.flow import build_from_spec, preset
from survae.train import TrainConfig, train

SMALL = {"data_dim": 2, "seed": 3, "base": {"family": "standard_normal"},
         "layers": [{"kind": "actnorm"}, {"kind": "affine_coupling", "hidden": [8]},
                    {"kind": "permutation", "perm": "reverse"}, {"kind": "affine_coupling", "hidden": [8]}]}


@pytest.fixture
def trained():
    flow = build_from_spec(SMALL)
    x = data.generate("gaussians", 1000, 0).samples
    res = train(flow, x, TrainConfig(iterations=30, batch_size=32, seed=1))
    return flow, ckpt.TrainerState(res.state, b"rng-bytes", res.iteration), x


def test_save_load_save_is_byte_identical(tmp_path, trained):
    flow, state, _ = trained
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    ckpt.save(flow, state, a)
    flow2, state2 = ckpt.load(a)
    ckpt.save(flow2, state2, b)
    assert a.read_bytes() == b.read_bytes()
    assert state2.iteration == 30 and state2.rng_state == b"rng-bytes" and state2.adam.step == 30
    x = np.random.default_rng(0).normal(size=(10, 2))
    assert np.array_equal(flow.log_likelihood(x).value, flow2.log_likelihood(x).value)


def test_no_optimizer_state(tmp_path):
    flow = build_from_spec(preset("baseline"))
    path = tmp_path / "f.ckpt"
    ckpt.save(flow, None, path)
    _, state = ckpt.load(path)
    assert state.adam is None and state.iteration == 0


def test_truncated_file(tmp_path, trained):
    flow, state, _ = trained
    path = tmp_path / "t.ckpt"
    ckpt.save(flow, state, path)
    raw = path.read_bytes()
    for cut in (3, 20, len(raw) // 2, len(raw) - 1):
        path.write_bytes(raw[:cut])
        with pytest.raises(ckpt.CorruptCheckpointError):
            ckpt.load(path)


def test_bit_flip_detected(tmp_path, trained):
    flow, state, _ = trained
    path = tmp_path / "f.ckpt"
    ckpt.save(flow, state, path)
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0x01
    path.write_bytes(bytes(raw))
    with pytest.raises(ckpt.CorruptCheckpointError, match="checksum"):
        ckpt.load(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "x.ckpt"
    path.write_bytes(b"SURVAE02" + bytes(40))
    with pytest.raises(ckpt.CheckpointError, match="magic"):
        ckpt.load(path)


def _rewrite(flow, state, path, edit):
    body = edit(ckpt._encode(flow, state)[:-4])
    path.write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def test_shape_mismatch(tmp_path, trained):
    flow, state, _ = trained
    path = tmp_path / "s.ckpt"
    # same byte length, so only the descriptor and the stored shapes disagree
    _rewrite(flow, state, path, lambda b: b.replace(b'"hidden":[8]', b'"hidden":[9]', 1))
    with pytest.raises(ckpt.CheckpointError, match="shape mismatch"):
        ckpt.load(path)


def test_name_mismatch(tmp_path, trained):
    flow, state, _ = trained
    path = tmp_path / "n.ckpt"
    _rewrite(flow, state, path, lambda b: b.replace(b"layers.1.", b"layers.7.", 1))
    with pytest.raises(ckpt.CheckpointError, match="parameter names"):
        ckpt.load(path)


def test_resume_is_bitwise(tmp_path):
    x = data.generate("gaussians", 2000, 0).samples
    cfg = dict(batch_size=64, seed=5, trace_every=25)
    full = build_from_spec(SMALL)
    ref = train(full, x, TrainConfig(iterations=200, **cfg))

    part = build_from_spec(SMALL)
    first = train(part, x, TrainConfig(iterations=100, **cfg))
    path = tmp_path / "mid.ckpt"
    ckpt.save(part, ckpt.TrainerState(first.state, b"", first.iteration), path)
    resumed, state = ckpt.load(path)
    second = train(resumed, x, TrainConfig(iterations=100, **cfg), state=state.adam, start_iteration=state.iteration)

    assert first.trace + second.trace == ref.trace
    for p, q in zip(full.named_parameters().values(), resumed.named_parameters().values()):
        assert p.value.tobytes() == q.value.tobytes()
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    ckpt.save(full, ckpt.TrainerState(ref.state, b"", ref.iteration), a)
    ckpt.save(resumed, ckpt.TrainerState(second.state, b"", second.iteration), b)
    assert a.read_bytes() == b.read_bytes()


def test_unknown_layer_kind(tmp_path, trained):
    flow, state, _ = trained
    path = tmp_path / "k.ckpt"
    _rewrite(flow, state, path, lambda b: b.replace(b'"kind":"actnorm"', b'"kind":"actnorx"', 1))
    with pytest.raises(ckpt.CheckpointError, match="actnorx"):
        ckpt.load(path)
