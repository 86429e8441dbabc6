import hashlib
import math

import numpy as np
import pytest

from ganstego.autodiff import set_stat_updates
from ganstego.fixtures import synthetic_covers, write_dataset
from ganstego.gan import discriminator_loss, generator_adversarial_loss, perceptual_loss, reconstruction_loss, total_loss
from ganstego.media import BitPayload, Image, bit_error_rate
from ganstego.trainer import (
    Checkpoint, CheckpointError, ConfigHashMismatch, CoverDataset, DatasetError, NonFiniteLoss,
    StegoModel, TrainConfig, Trainer, TrainTrace, embed_with_model, extract_with_model, train_run,
)

TINY = TrainConfig(crop=16, batch_size=2, steps=3, g_width=4, d_width=4, e_width=4, e_layers=3,
                   checkpoint_interval=2, seed=7)


@pytest.fixture(scope="module")
def covers():
    return synthetic_covers(5, seed=11, height=24, width=24)


@pytest.fixture
def dataset(covers):
    return CoverDataset(covers, crop=16)


def checksums(trainer):
    out = {}
    for k, net in trainer.models.networks().items():
        h = hashlib.sha256()
        for _, p in net.named_parameters():
            h.update(p.data.tobytes())
        for _, b in net.named_buffers():
            h.update(b.tobytes())
        out[k] = h.hexdigest()
    return out


def test_config_text_roundtrip_and_hash():
    text = TINY.to_text()
    assert TrainConfig.from_text(text) == TINY
    assert TINY.with_(steps=99, dataset="elsewhere", out_dir="x").hash() == TINY.hash()
    assert TINY.with_(seed=8).hash() != TINY.hash()
    assert TINY.with_(lambda_rec=1.0).hash() != TINY.hash()
    assert len(TINY.hash()) == 32


def test_config_parsing_errors():
    assert TrainConfig.from_text("# comment\n\nsteps = 5\nearly_stop=true\n").early_stop is True
    with pytest.raises(ValueError, match="unknown key"):
        TrainConfig.from_text("nope=1")
    with pytest.raises(ValueError, match="steps"):
        TrainConfig.from_text("steps=abc")
    with pytest.raises(ValueError, match="multiple of 16"):
        TrainConfig(crop=24)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_dataset_batches_are_pure_functions_of_step(dataset):
    a = dataset.batch(3, 5, 4, 1)
    b = dataset.batch(3, 5, 4, 1)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert a[0].shape == (4, 3, 16, 16) and a[1].shape == (4, 1, 16, 16)
    # one epoch visits every image exactly once
    idx = np.concatenate([dataset.indices(3, t, 1) for t in range(len(dataset))])
    assert sorted(idx.tolist()) == list(range(len(dataset)))


def test_dataset_errors(tmp_path, covers):
    with pytest.raises(DatasetError, match="empty"):
        CoverDataset([], 16)
    with pytest.raises(DatasetError, match="smaller"):
        CoverDataset(covers, 32)
    with pytest.raises(DatasetError, match="not found"):
        CoverDataset.from_dir(tmp_path / "missing", 16)
    with pytest.raises(DatasetError, match="no PNG"):
        CoverDataset.from_dir(tmp_path, 16)


def test_dataset_from_dir_is_sorted(tmp_path):
    write_dataset(tmp_path, 3, seed=1, height=16, width=16)
    (tmp_path / "notes.txt").write_text("ignored")
    sub = tmp_path / "nested"
    sub.mkdir()
    write_dataset(sub, 1, seed=2, height=16, width=16)
    ds = CoverDataset.from_dir(tmp_path, 16)
    assert ds.names == ["cover_0000.png", "cover_0001.png", "cover_0002.png"]


def test_phase_isolation(dataset):
    tr = Trainer(TINY, dataset)
    x, s, t = tr._tensors(*tr.next_batch())
    before = checksums(tr)
    tr.phase_d(x, s)
    after_d = checksums(tr)
    assert after_d["G"] == before["G"] and after_d["E"] == before["E"] and after_d["D"] != before["D"]
    tr.phase_g(x, s, t)
    after_g = checksums(tr)
    assert after_g["D"] == after_d["D"] and after_g["E"] == after_d["E"] and after_g["G"] != after_d["G"]
    tr.phase_e(x, s, t)
    after_e = checksums(tr)
    assert after_e["D"] == after_g["D"] and after_e["G"] == after_g["G"] and after_e["E"] != after_g["E"]


def _phase_losses(tr, x, s, t):
    """Each phase's objective on a fixed batch, without touching running stats."""
    m = tr.models
    nets = list(m.networks().values())
    for n in nets:
        set_stat_updates(n, False)
    try:
        fake = m.generator(x, s)
        ld = discriminator_loss(m.discriminator(x), m.discriminator(fake)).item()
        lg = total_loss(generator_adversarial_loss(m.discriminator(fake)),
                        reconstruction_loss(t, m.extractor(fake)),
                        perceptual_loss(m.features, x, fake), tr.config.weights).item()
        le = reconstruction_loss(t, m.extractor(fake)).item()
    finally:
        for n in nets:
            set_stat_updates(n, True)
    return ld, lg, le


def test_small_step_does_not_increase_phase_loss(dataset):
    cfg = TINY.with_(lr_g=1e-6, lr_d=1e-6, lr_e=1e-6)
    tr = Trainer(cfg, dataset)
    x, s, t = tr._tensors(*tr.next_batch())
    ld0, _, _ = _phase_losses(tr, x, s, t)
    tr.phase_d(x, s)
    ld1, lg0, _ = _phase_losses(tr, x, s, t)
    tr.phase_g(x, s, t)
    _, lg1, le0 = _phase_losses(tr, x, s, t)
    tr.phase_e(x, s, t)
    _, _, le1 = _phase_losses(tr, x, s, t)
    assert ld1 <= ld0 + 1e-6
    assert lg1 <= lg0 + 1e-6
    assert le1 <= le0 + 1e-6


def test_training_is_deterministic(dataset):
    c1, t1 = train_run(TINY, dataset)
    c2, t2 = train_run(TINY, dataset)
    assert t1 == t2
    assert c1.to_bytes() == c2.to_bytes()
    assert [r.step for r in t1] == [0, 1, 2]
    assert all(math.isfinite(v) for r in t1 for v in vars(r).values())


def test_zero_steps_equals_initialization(dataset):
    ckpt, trace = train_run(TINY.with_(steps=0), dataset)
    assert len(trace) == 0 and ckpt.step == 0
    assert ckpt.to_bytes() == Trainer(TINY.with_(steps=0), dataset).checkpoint().to_bytes()
    fresh = Trainer(TINY, dataset).checkpoint()
    assert all(np.array_equal(fresh.blobs[k], v) for k, v in ckpt.blobs.items())


def test_split_resume_equivalence(dataset):
    full, _ = train_run(TINY.with_(steps=4), dataset)
    half, _ = train_run(TINY.with_(steps=2), dataset)
    resumed, trace = train_run(TINY.with_(steps=4), dataset, resume=Checkpoint.from_bytes(half.to_bytes()))
    assert [r.step for r in trace] == [2, 3]
    assert resumed.to_bytes() == full.to_bytes()


def test_resume_rejects_other_config(dataset):
    ckpt, _ = train_run(TINY.with_(steps=1), dataset)
    with pytest.raises(ConfigHashMismatch) as info:
        train_run(TINY.with_(seed=8), dataset, resume=ckpt)
    assert info.value.found == TINY.hash()


def test_checkpoint_roundtrip_and_files(tmp_path, dataset):
    ckpt, trace = train_run(TINY, dataset, out_dir=tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["ckpt_000002.sgf", "final.sgf", "trace.csv"]
    data = (tmp_path / "final.sgf").read_bytes()
    assert data[:4] == b"SGF1" and data[4:6] == b"\x01\x00" and data[6:38] == TINY.hash()
    loaded = Checkpoint.load(tmp_path / "final.sgf")
    assert loaded.to_bytes() == data == ckpt.to_bytes()
    assert TrainTrace.from_csv((tmp_path / "trace.csv").read_text()) == trace
    assert (tmp_path / "trace.csv").read_text().splitlines()[0] == "step,l_adv,l_rec,l_perc,total,d_acc,e_bitacc"


def test_checkpoint_corruption_detected(dataset):
    data = Trainer(TINY, dataset).checkpoint().to_bytes()
    with pytest.raises(CheckpointError, match="magic"):
        Checkpoint.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(CheckpointError, match="truncated"):
        Checkpoint.from_bytes(data[:-3])
    bad = bytearray(data)
    bad[10] ^= 1  # inside the stored hash
    with pytest.raises(CheckpointError):
        Checkpoint.from_bytes(bytes(bad))


def test_non_finite_loss_names_phase(dataset):
    tr = Trainer(TINY, dataset)
    covers, bits = tr.next_batch()
    covers = covers.copy()
    covers[0, 0, 0, 0] = np.nan
    with pytest.raises(NonFiniteLoss, match="discriminator"):
        tr.train_step(covers, bits)


def test_early_stop(dataset):
    cfg = TINY.with_(steps=50, early_stop=True, early_stop_window=2, early_stop_tol=1.0)
    _, trace = train_run(cfg, dataset)
    assert len(trace) == 4


def test_embed_extract_with_model(dataset, covers):
    ckpt, _ = train_run(TINY.with_(steps=1), dataset)
    cover = Image(covers[0].pixels[:16, :16])
    payload = BitPayload.from_bytes(b"ab")
    s1 = embed_with_model(ckpt, cover, payload, seed=3)
    s2 = embed_with_model(Checkpoint.from_bytes(ckpt.to_bytes()), cover, payload, seed=3)
    assert s1.shape == cover.shape
    assert s1 == s2
    model = StegoModel(ckpt)
    assert model.capacity(cover) == 256
    bits = model.extract_bits(s1)
    assert bits.shape == (256,)
    with pytest.raises(Exception):
        model.embed(Image(covers[0].pixels[:12, :16]), payload)
    try:
        extract_with_model(ckpt, s1)
    except Exception as exc:  # an untrained extractor may garble the header
        assert "header" in str(exc)


def test_trace_csv_roundtrip():
    from ganstego.trainer import TraceRecord

    t = TrainTrace([TraceRecord(0, 0.1, 0.2, 0.3, 0.6, 0.5, 0.75), TraceRecord(1, -1e-9, 1 / 3, 0, 1, 1, 1)])
    assert TrainTrace.from_csv(t.to_csv()) == t
    assert bit_error_rate([1], [1]) == 0.0
