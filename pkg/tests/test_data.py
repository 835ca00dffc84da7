import numpy as np
import pytest
import torch
from PIL import Image
from scipy import stats

from umle.data import (Checkpoint, DomainTag, extract_local_patch, load_checkpoint, load_dataset, load_unpaired,
                       make_toy_corpus, sample_indices, sample_unpaired, save_checkpoint, save_png)
from umle.errors import CheckpointCorrupt, ConfigMismatch, DatasetEmpty, PatchTooLarge


def _write_pngs(directory, n, size=(48, 40), seed=0):
    rng = np.random.default_rng(seed)
    directory.mkdir(parents=True, exist_ok=True)
    for k in range(n):
        arr = rng.integers(0, 256, (size[0], size[1], 3), dtype=np.uint8)
        Image.fromarray(arr).save(directory / f"img_{k:02d}.png")


def test_load_eight_pngs(tmp_path):
    _write_pngs(tmp_path, 8)
    ds = load_dataset(tmp_path, DomainTag.LOW, (64, 64))
    assert len(ds) == 8
    assert all(im.shape == (3, 64, 64) and im.dtype == np.float32 for im in ds.images)
    assert all(0 <= im.min() and im.max() <= 1 for im in ds.images)
    assert [p.name for p in ds.image_paths] == sorted(p.name for p in ds.image_paths)


def test_empty_dir(tmp_path):
    with pytest.raises(DatasetEmpty):
        load_dataset(tmp_path)
    with pytest.raises(DatasetEmpty):
        load_dataset(tmp_path / "missing")


def test_non_image_file_skipped_with_warning(tmp_path):
    _write_pngs(tmp_path, 7)
    (tmp_path / "notes.txt").write_text("not an image")
    ds = load_dataset(tmp_path, target_size=(32, 32))
    assert len(ds) == 7
    assert len(ds.warnings) == 1 and "notes.txt" in ds.warnings[0]


def test_only_garbage_is_empty(tmp_path):
    (tmp_path / "a.png").write_bytes(b"garbage")
    with pytest.raises(DatasetEmpty):
        load_dataset(tmp_path)


def test_resize_idempotent_at_target(tmp_path):
    arr = np.random.default_rng(1).integers(0, 256, (64, 64, 3), dtype=np.uint8)
    Image.fromarray(arr).save(tmp_path / "x.png")
    ds = load_dataset(tmp_path, target_size=(64, 64))
    np.testing.assert_array_equal(ds.images[0], arr.transpose(2, 0, 1).astype(np.float32) / 255)


def test_threaded_loading_preserves_order(tmp_path):
    _write_pngs(tmp_path, 12)
    a = load_dataset(tmp_path, target_size=(32, 32), workers=1)
    b = load_dataset(tmp_path, target_size=(32, 32), workers=4)
    assert a.image_paths == b.image_paths
    for x, y in zip(a.images, b.images):
        assert np.array_equal(x, y)


def test_load_unpaired(tmp_path):
    _write_pngs(tmp_path / "low", 3)
    _write_pngs(tmp_path / "normal", 5, seed=1)
    low, normal = load_unpaired(tmp_path, (32, 32))
    assert (len(low), len(normal)) == (3, 5)
    assert low.domain_tag is DomainTag.LOW and normal.domain_tag is DomainTag.NORMAL


def test_sampling_deterministic(tmp_path):
    _write_pngs(tmp_path / "low", 4)
    _write_pngs(tmp_path / "normal", 4, seed=1)
    low, normal = load_unpaired(tmp_path, (32, 32))
    a = sample_unpaired(low, normal, 0, 0)
    b = sample_unpaired(low, normal, 0, 0)
    assert torch.equal(a[0], b[0]) and torch.equal(a[1], b[1])
    assert a[0].shape == (1, 3, 32, 32)
    seq = [sample_indices(8, 8, 5, it) for it in range(50)]
    assert seq == [sample_indices(8, 8, 5, it) for it in range(50)]
    assert seq != [sample_indices(8, 8, 6, it) for it in range(50)]


def test_single_image_domains_forced():
    assert {sample_indices(1, 1, 3, it) for it in range(20)} == {(0, 0)}


def test_sampling_frequencies_uniform():
    draws = np.array([sample_indices(8, 8, 0, it) for it in range(1000)])
    for col in range(2):
        counts = np.bincount(draws[:, col], minlength=8)
        assert np.all(np.abs(counts / 1000 - 0.125) <= 0.05)
        assert stats.chisquare(counts).pvalue > 1e-3
    # the two domains are drawn from independent streams
    assert np.mean(draws[:, 0] == draws[:, 1]) < 0.2


def test_local_patch():
    x = torch.rand(1, 3, 10, 10)
    assert torch.equal(extract_local_patch(x, 0, 0), x)
    y = torch.rand(2, 3, 64, 64)
    p = extract_local_patch(y, 0, 3)
    assert p.shape == (2, 3, 10, 10)
    assert torch.equal(p, extract_local_patch(y, 0, 3))
    with pytest.raises(PatchTooLarge):
        extract_local_patch(torch.rand(1, 3, 9, 12), 0, 0)


def test_save_png_quantization(tmp_path):
    img = np.random.default_rng(2).random((3, 16, 16))
    save_png(img, tmp_path / "o.png")
    back = np.asarray(Image.open(tmp_path / "o.png"), dtype=np.float64).transpose(2, 0, 1) / 255
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12


def _ckpt(digest="abc"):
    rng = np.random.default_rng(3)
    params = {"enc.w": rng.standard_normal((4, 3, 3, 3)).astype(np.float32), "enc.b": np.arange(4.0)}
    optim = {"G/step": np.array(7), "G/m/enc.w": rng.standard_normal((4, 3, 3, 3)).astype(np.float32)}
    return Checkpoint(7, params, optim, {"seed": hex(0), "next_iteration": hex(7)}, digest, {"note": "x"})


def test_checkpoint_round_trip(tmp_path):
    ck = _ckpt()
    save_checkpoint(ck, tmp_path / "c.npz")
    back = load_checkpoint(tmp_path / "c.npz", expected_digest="abc")
    assert back.iteration == 7 and back.rng_state == ck.rng_state and back.meta == {"note": "x"}
    for src, dst in ((ck.params, back.params), (ck.optimizer_state, back.optimizer_state)):
        assert src.keys() == dst.keys()
        for k in src:
            assert np.asarray(src[k]).dtype == dst[k].dtype
            assert np.array_equal(src[k], dst[k])


def test_truncated_checkpoint(tmp_path):
    save_checkpoint(_ckpt(), tmp_path / "c.npz")
    raw = (tmp_path / "c.npz").read_bytes()
    (tmp_path / "t.npz").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointCorrupt):
        load_checkpoint(tmp_path / "t.npz")
    (tmp_path / "g.npz").write_bytes(b"not a zip")
    with pytest.raises(CheckpointCorrupt):
        load_checkpoint(tmp_path / "g.npz")


def test_checkpoint_digest_mismatch(tmp_path):
    save_checkpoint(_ckpt("abc"), tmp_path / "c.npz")
    with pytest.raises(ConfigMismatch):
        load_checkpoint(tmp_path / "c.npz", expected_digest="def")
    assert load_checkpoint(tmp_path / "c.npz", expected_digest="def", allow_mismatch=True).iteration == 7


def test_toy_corpus(tmp_path):
    root = make_toy_corpus(tmp_path, n_low=3, n_normal=4, size=32)
    low, normal = load_unpaired(root, (32, 32))
    assert (len(low), len(normal)) == (3, 4)
    assert np.mean([im.mean() for im in low.images]) < np.mean([im.mean() for im in normal.images])
