"""Acceptance gate: the ten primary criteria at their stated tolerances and time budgets.

Each test appends one ``[PASS]`` / ``[FAIL]`` line to ``REPORT``; the lines are
printed in the pytest terminal summary (see ``conftest.py``) and also when the
module is run directly with ``python3 tests/test_acceptance.py``.
"""

import math
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
import torch

from oracles import (KERNEL_SUM_R10, channel_attention_loop, finite_difference_check,
                     pixel_attention_textual_loop)
from umle.attention import CPA, CPAM
from umle.config import TrainConfig
from umle.data import _natural_images, load_unpaired, make_toy_corpus
from umle.errors import NonFiniteGradient
from umle.evaluation import condition_label, enhance, enhance_dir, score_dir
from umle.filters import build_gaussian_kernel, frequency_split, highpass
from umle.losses import (LossWeights, RandomPerceptual, adversarial_loss, branch_adversarial, color_loss,
                         cycle_loss, identity_loss, preserving_loss, total_loss)
from umle.metrics import entropy, fit_pristine, niqe
from umle.networks import UMLE, ArchConfig, Encoder, count_params
from umle.optim import AdamGC, centralize_gradient
from umle.training import Trainer, load_generator, read_trace, train

REPORT: list[str] = []
# shared between criteria 7 and 8 when both run in one session
_STATE: dict = {}


@contextmanager
def criterion(number, title, budget_s):
    notes = []
    t0 = time.perf_counter()
    ok = False
    try:
        yield notes
        ok = True
    finally:
        elapsed = time.perf_counter() - t0
        in_time = elapsed < budget_s
        status = "PASS" if ok and in_time else "FAIL"
        detail = "; ".join(notes)
        line = f"[{status}] {number:>2}. {title}: {detail} [{elapsed:.1f} s / budget {budget_s} s]"
        REPORT.append(line)
        print(line)
    assert in_time, f"criterion {number} took {elapsed:.1f} s (budget {budget_s} s)"


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = make_toy_corpus(tmp_path_factory.mktemp("corpus"), n_low=8, n_normal=8, size=64, seed=0)
    low, normal = load_unpaired(root, (64, 64))
    return root, low, normal


# ---------------------------------------------------------------------------

def test_c01_kernel_correctness():
    with criterion(1, "kernel correctness", 1) as notes:
        k = build_gaussian_kernel()
        center, g11, total = k[10, 10], k[11, 11], float(k.sum())
        err = abs(g11 - 0.053 * math.exp(-1 / 3))
        notes += [f"center={center!r}", f"|G(1,1)-ref|={err:.1e}", f"sum={total:.6f}"]
        assert center == 0.053
        assert err < 1e-9
        assert 0.9985 <= total <= 1.0005
        assert abs(total - KERNEL_SUM_R10) < 1e-12


def test_c02_frequency_complementarity():
    with criterion(2, "frequency complementarity", 5) as notes:
        g = torch.Generator().manual_seed(2)
        exact = 0
        for _ in range(20):
            x = torch.rand(1, 3, 64, 64, generator=g)
            low, high = frequency_split(x)
            exact += bool(torch.equal(low + high, x.double()))
        worst = max(highpass(torch.full((1, 3, 64, 64), c)).abs().max().item() for c in (0.0, 0.3, 0.7, 1.0))
        notes += [f"{exact}/20 bitwise exact", f"max|highpass(const)|={worst:.2e}"]
        assert exact == 20
        assert worst < 1e-3


def test_c03_attention_oracle():
    with criterion(3, "attention oracle equivalence", 10) as notes:
        worst = 0.0
        for seed in range(10):
            torch.manual_seed(seed)
            cpa = CPA(4).double()
            with torch.no_grad():
                for p in cpa.parameters():
                    p.normal_(0, 0.7)
            x = torch.randn(1, 4, 8, 8, dtype=torch.float64)
            ch, pj = cpa.channel.conv, cpa.pixel.proj
            c_r = channel_attention_loop(x[0].numpy(), ch.weight.view(-1).tolist(), ch.bias.item())
            w = pj.weight.view(-1).tolist()
            want = pixel_attention_textual_loop(c_r, w[0], w[1], pj.bias.item())
            worst = max(worst, float(np.abs(cpa(x)[0].detach().numpy() - want).max()))
        m = CPAM(4)
        with torch.no_grad():
            m.cpa.pixel.proj.weight.zero_()
            m.cpa.pixel.proj.bias.fill_(-1e4)
        x = torch.randn(1, 4, 8, 8)
        identity = torch.equal(m(x), x)
        notes += [f"max|CPA-oracle|={worst:.1e} over 10 inputs", f"residual identity={identity}"]
        assert worst < 1e-6
        assert identity


def _fd(loss_fn, param, label, results, n=3, seed=0):
    rows = finite_difference_check(loss_fn, param, n_coords=n, h=1e-5, seed=seed, min_abs=1e-7)
    results.extend((label, rel) for _, _, rel in rows)
    return len(rows)


def test_c04_gradient_checks():
    with criterion(4, "finite-difference gradient checks", 120) as notes:
        results = []
        # (a) CPA parameters
        torch.manual_seed(0)
        cpa = CPAM(4).double()
        x = torch.randn(1, 4, 6, 6, dtype=torch.float64)
        n_a = sum(_fd(lambda: cpa(x).pow(2).mean(), p, f"cpa.{name}", results)
                  for name, p in cpa.named_parameters())
        # (b) one encoder convolution
        enc = Encoder(ArchConfig(base_channels=4)).double()
        xi = torch.rand(1, 3, 16, 16, dtype=torch.float64)
        n_b = _fd(lambda: enc(xi).pow(2).mean(), enc.net[3].weight, "encoder.conv", results)
        # (c) each loss term through a tiny generator
        torch.manual_seed(1)
        m = UMLE(ArchConfig(base_channels=2, n_down=2, n_res=1)).double()
        ext = RandomPerceptual().double()
        g = torch.Generator().manual_seed(1)
        x_l = torch.rand(1, 3, 32, 32, generator=g, dtype=torch.float64)
        x_n = torch.rand(1, 3, 32, 32, generator=g, dtype=torch.float64)
        terms = {
            "adv": lambda: branch_adversarial(None, m.discriminate(m.generate(x_l, "LN"), "N"), "G")[0],
            "cyc": lambda: cycle_loss(x_l, m.generate(m.generate(x_l, "LN"), "NL")),
            "color": lambda: color_loss(m.discriminate(m.generate(x_l, "LN"), "N")["color"]),
            "pre": lambda: preserving_loss(x_l, m.generate(x_l, "LN"), ext),
            "idt": lambda: identity_loss(x_n, m.generate(x_n, "LN")),
        }
        params = [m.encoders["L"].net[0].weight, m.decoders["LN"].to_rgb.weight]
        n_c = {}
        for name, fn in terms.items():
            n_c[name] = sum(_fd(fn, p, f"loss.{name}", results, n=2, seed=i) for i, p in enumerate(params))
        worst = max(rel for _, rel in results)
        notes += [f"{len(results)} coordinates", f"worst rel err={worst:.1e}",
                  f"coords: cpa={n_a} enc={n_b} " + " ".join(f"{k}={v}" for k, v in n_c.items())]
        assert n_a >= 3 and n_b >= 3 and all(v >= 3 for v in n_c.values())
        assert worst < 1e-3, [r for r in results if r[1] >= 1e-3]


def test_c05_loss_fixed_points():
    with criterion(5, "loss fixed points", 5) as notes:
        ones, zeros = torch.ones(1, 1, 8, 8), torch.zeros(1, 1, 8, 8)
        d = adversarial_loss(ones, zeros, "D").item()
        gl = adversarial_loss(None, ones, "G").item()
        x = torch.rand(1, 3, 32, 32)
        cyc, idt = cycle_loss(x, x).item(), identity_loss(x, x).item()
        pre = preserving_loss(x, x, RandomPerceptual()).item()
        total, _ = total_loss({t: 1.0 for t in ("adv", "cyc", "color", "pre", "idt")}, LossWeights())
        notes += [f"D={d} G={gl} cyc={cyc} idt={idt} pre={pre}", f"total={total!r}"]
        assert d == gl == cyc == idt == pre == 0.0
        assert total == 111.01


def test_c06_shared_encoder(corpus):
    with criterion(6, "shared-encoder accounting", 30) as notes:
        arch = ArchConfig()
        shared = sum(r["params"] for r in count_params(UMLE(arch, share_encoder=True)))
        unshared = sum(r["params"] for r in count_params(UMLE(arch, share_encoder=False)))
        _, low, normal = corpus
        x_low, x_normal = torch.from_numpy(low[0][None]), torch.from_numpy(normal[0][None])
        seen = {}
        for label, ablation in (("on", frozenset()), ("off", frozenset({"NO_SHARED_ENCODER"}))):
            tr = Trainer(TrainConfig(ablation=ablation), low, normal)
            before = tr.model.generate(x_low, "LN").detach().clone()
            tr.d_step(x_low, x_normal, 0)
            seen[label] = not torch.equal(before, tr.model.generate(x_low, "LN"))
        notes += [f"params shared={shared:,} unshared={unshared:,}",
                  f"D-step visible in G: sharing on={seen['on']} off={seen['off']}"]
        assert shared < unshared
        assert seen["on"] and not seen["off"]


def test_c07_training_smoke(corpus, tmp_path_factory):
    with criterion(7, "training smoke test (500 it, 8+8 @ 64x64)", 15 * 60) as notes:
        root, low, normal = corpus
        out = tmp_path_factory.mktemp("c7")
        cfg = TrainConfig(seed=0, iterations=500, checkpoint_every=50)
        try:
            _, run_a = train(cfg, low, normal, output_dir=out / "a")
            finite = True
        except NonFiniteGradient as exc:
            notes.append(f"NonFiniteGradient: {exc}")
            raise
        _STATE["default_dir"] = out / "a"
        _STATE["default_trace"] = run_a
        total = np.array([r.total_g for r in run_a])
        first, trailing = total[:20].mean(), total[-100:].mean()

        model = load_generator(out / "a" / "final.npz")
        lo, hi = 1.0, 0.0
        for img in low.images:
            y = enhance(model, img)
            lo, hi = min(lo, float(y.min())), max(hi, float(y.max()))

        _, run_b = train(cfg, low, normal)
        rerun_equal = [r.losses() for r in run_b] == [r.losses() for r in run_a]
        _, run_c = train(cfg, low, normal, resume_from=out / "a" / "ckpt_000250.npz")
        resume_equal = [r.losses() for r in run_c] == [r.losses() for r in run_a[250:]]

        notes += [f"(a) finite={finite}", f"(b) trailing100={trailing:.3f} first20={first:.3f} "
                  f"ratio={trailing / first:.3f}", f"(c) outputs in [{lo:.3f}, {hi:.3f}]",
                  f"(d) rerun bitwise={rerun_equal}", f"(e) resume@250 bitwise={resume_equal}"]
        assert trailing <= 0.8 * first
        assert 0.0 <= lo and hi <= 1.0
        assert rerun_equal and resume_equal


TOGGLES = {
    "NO_COLOR_D": ("color",),
    "NO_TEXTURE_D": ("texture",),
    "NO_MULTISCALE_D": ("scale_0", "scale_1", "scale_2", "local"),
}


def test_c08_ablation_plumbing(corpus, tmp_path_factory):
    with criterion(8, "ablation plumbing (3 toggles x 200 it)", 30 * 60) as notes:
        root, low, normal = corpus
        out = tmp_path_factory.mktemp("c8")
        if "default_trace" in _STATE:
            default = _STATE["default_trace"][:200]
            default_ckpt = _STATE["default_dir"] / "ckpt_000200.npz"
        else:
            train(TrainConfig(iterations=200), low, normal, output_dir=out / "default")
            default = [r for r in read_trace(out / "default" / "loss_trace.csv")]
            default_ckpt = out / "default" / "final.npz"
        default_totals = [r.total_g if hasattr(r, "total_g") else r["total_g"] for r in default]

        enhance_dir(load_generator(default_ckpt), root / "low", out / "default_enh", size=(192, 192), report=None)
        base = score_dir(out / "default_enh")[-1]
        table = [("default configuration", base["niqe"], base["entropy"])]
        checks = []
        for name, removed in TOGGLES.items():
            cfg = TrainConfig(iterations=200, ablation=frozenset({name}))
            run_dir = out / name.lower()
            train(cfg, low, normal, output_dir=run_dir)
            trace = read_trace(run_dir / "loss_trace.csv")
            header = (run_dir / "loss_trace_branches.csv").read_text().splitlines()[0].split(",")[1:]
            active = {k.split("/")[1] for k in header}
            differs = [r["total_g"] for r in trace] != default_totals
            excluded = not (active & set(removed)) and active == set(cfg.branches)
            color_zero = name != "NO_COLOR_D" or all(r["color"] == 0.0 for r in trace)
            model = load_generator(run_dir / "final.npz")
            enhance_dir(model, root / "low", run_dir / "enhanced", size=(192, 192), report=None)
            mean = score_dir(run_dir / "enhanced")[-1]
            table.append((condition_label(cfg.ablation), mean["niqe"], mean["entropy"]))
            finite = math.isfinite(mean["niqe"]) and math.isfinite(mean["entropy"])
            checks.append(len(trace) == 200 and differs and excluded and color_zero and finite)
            notes.append(f"{name}: trace differs={differs} branches excluded={excluded}"
                         + (f" color term zero={color_zero}" if name == "NO_COLOR_D" else ""))
        for cond, n, e in table:
            print(f"  {cond:<34s} NIQE {n:7.3f}  ENTROPY {e:6.3f}")
        labels = [t[0] for t in table[1:]]
        assert labels == ["with D_T, with D_M, w/o D_C", "with D_C, with D_M, w/o D_T", "with D_C, with D_T, w/o D_M"]
        assert all(checks)


def test_c09_metrics():
    with criterion(9, "entropy and NIQE", 120) as notes:
        flat = entropy(np.full((3, 32, 32), 0.5))
        uniform = entropy(np.repeat(np.arange(256, dtype=np.uint8), 4).reshape(32, 32))
        binary = np.zeros((16, 16), dtype=np.uint8)
        binary[:, 8:] = 255
        two = entropy(binary)
        photos = [im.transpose(2, 0, 1).astype(np.float64) / 255 for _, im in _natural_images()]
        model = fit_pristine(photos)
        deterministic = niqe(photos[0], model) == niqe(photos[0], model)
        rng = np.random.default_rng(0)
        raised = 0
        for img in photos[:10]:
            noisy = np.clip(img + rng.normal(0, 0.1, img.shape), 0, 1)
            raised += niqe(noisy, model) > niqe(img, model)
        notes += [f"entropy const={flat} uniform={uniform} binary={two}", f"NIQE deterministic={deterministic}",
                  f"noise raised NIQE on {raised}/10"]
        assert (flat, uniform, two) == (0.0, 8.0, 1.0)
        assert deterministic
        assert raised >= 9


def test_c10_optimizer():
    with criterion(10, "optimizer", 1) as notes:
        gc = centralize_gradient(torch.tensor([[1.0, 2.0], [3.0, 4.0]]))
        gc_ok = torch.equal(gc, torch.tensor([[-0.5, 0.5], [-0.5, 0.5]]))
        w = torch.nn.Parameter(torch.tensor([[1.0, -2.0], [3.0, 0.25]], dtype=torch.float64))
        w0 = w.detach().clone()
        AdamGC([("w", w)], lr=1e-3, weight_decay=0.5).step([torch.zeros_like(w)])
        decay_ok = torch.equal(w.detach(), w0 * (1 - 1e-3 * 0.5))
        rho = torch.nn.Parameter(torch.full((4,), 0.5))
        AdamGC([("norm.rho", rho)], lr=0.7, weight_decay=0.0).step([-torch.ones(4)])
        clamp_ok = bool(torch.all(rho == 1.0))
        notes += [f"GC example exact={gc_ok}", f"decay-only closed form={decay_ok}", f"rho 1.2 -> {rho[0].item()}"]
        assert gc_ok and decay_ok and clamp_ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
