"""Self-check suite: every module property evaluated on seeded random inputs.

Each check reports the largest error it observed next to its tolerance.
:func:`run_verification` prints one line per check and returns the results;
the whole report is a pure function of the seed.
"""

from __future__ import annotations

import math
import sys
import zlib
from dataclasses import dataclass
from typing import Callable, TextIO

import numpy as np

from . import autograd as ag
from . import fft
from .data import ClipSpec, generate_clip
from .dtf import apply_filters, dtf_mechanism_forward, export_equivalent_kernel, init_estimator, predict_filters
from .fa import frame_aggregate, gather_neighborhood, neighborhood_mask, window_mix, window_scores
from .fft import ComplexSeq
from .model import ModelConfig, build_net, net_forward, temporal_op
from .nn import (
    conv1d_temporal,
    conv2d_3x3,
    dynamic_conv1d,
    global_avg_pool,
    linear,
    rms_channel_norm,
    softmax_cross_entropy,
)
from .oracles import conv1d_temporal_loop, conv2d_3x3_loop, frame_aggregate_loop
from .tensor import inverse_permutation, matmul, permute
from .training import cosine_lr

GRAD_TOL = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tol: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name:<34} max_err={self.error:.3e} tol={self.tol:.0e}"


def _below(name, error, tol) -> CheckResult:
    return CheckResult(name, float(error), tol, bool(error < tol))


def _flag(name, ok: bool) -> CheckResult:
    # boolean property; reported error is 0 on success and 1 on failure
    return CheckResult(name, 0.0 if ok else 1.0, 0.5, bool(ok))


# ---------------------------------------------------------------------------
# gradient suite


def gradient_cases(seed: int = 0) -> list[tuple[str, Callable, list[np.ndarray]]]:
    """``(name, scalar function, inputs)`` for every differentiable primitive."""
    rng = np.random.default_rng(seed)
    n = rng.normal
    R = {}

    def proj(key, out):
        # scalar sum(out * R) for a fixed random R, so every output entry matters
        if key not in R:
            R[key] = np.random.default_rng(zlib.crc32(key.encode())).normal(size=ag.value_of(out).shape)
        return ag.sum(ag.mul(out, R[key]))

    mask = neighborhood_mask(3, 3, 3)[None, :, None]
    pre_relu = n(size=(3, 4))
    pre_relu[np.abs(pre_relu) < 0.1] += 0.5  # keep away from the kink
    cases = [
        ("add", lambda a, b: proj("add", ag.add(a, b)), [n(size=(3, 4)), n(size=(3, 4))]),
        ("sub", lambda a, b: proj("sub", ag.sub(a, b)), [n(size=(3, 4)), n(size=(3, 4))]),
        ("mul", lambda a, b: proj("mul", ag.mul(a, b)), [n(size=(3, 4)), n(size=(3, 4))]),
        ("square", lambda a: proj("sq", ag.square(a)), [n(size=(5,))]),
        ("matmul", lambda a, b: proj("mm", ag.matmul(a, b)), [n(size=(3, 4)), n(size=(4, 2))]),
        ("relu", lambda a: proj("relu", ag.relu(a)), [pre_relu]),
        ("softmax", lambda a: proj("sm", ag.softmax(a, axis=1)), [n(size=(3, 5))]),
        ("softmax_masked", lambda a: proj("smm", ag.softmax(a, axis=1, mask=mask)), [n(size=(1, 9, 2, 3, 3))]),
        ("reshape_permute", lambda a: proj("rp", ag.permute(ag.reshape(a, (2, 3, 4)), (2, 0, 1))), [n(size=(6, 4))]),
        ("concat", lambda a, b: proj("cat", ag.concat([a, b], axis=1)), [n(size=(2, 3)), n(size=(2, 2))]),
        ("repeat", lambda a: proj("rep", ag.repeat(a, 3, axis=1)), [n(size=(2, 2, 3))]),
        ("broadcast", lambda a: proj("bc", ag.broadcast_to(a, (2, 3, 4))), [n(size=(1, 3, 1))]),
        ("take", lambda a: proj("take", ag.take(a, [0, 2, 2], axis=1)), [n(size=(2, 4))]),
        ("rfft", lambda a: proj("rfft", ag.rfft(a)), [n(size=(2, 8))]),
        ("rfft_odd", lambda a: proj("rfft7", ag.rfft(a)), [n(size=(2, 7))]),
        ("irfft", lambda a: proj("irfft", ag.irfft(a, 8)), [n(size=(2, 5, 2))]),
        ("irfft_odd", lambda a: proj("irfft7", ag.irfft(a, 7)), [n(size=(2, 4, 2))]),
        ("cmul", lambda a, b: proj("cmul", ag.cmul(a, b)), [n(size=(3, 5, 2)), n(size=(3, 5, 2))]),
        ("conv2d", lambda x, w, b: proj("conv", conv2d_3x3(x, w, b)),
         [n(size=(1, 2, 2, 4, 4)), n(size=(2, 2, 3, 3)), n(size=(2,))]),
        ("conv2d_stride2", lambda x, w, b: proj("conv2", conv2d_3x3(x, w, b, stride=2)),
         [n(size=(1, 2, 2, 5, 5)), n(size=(3, 2, 3, 3)), n(size=(3,))]),
        ("conv1d", lambda x, w, b: proj("c1d", conv1d_temporal(x, w, b)),
         [n(size=(1, 2, 5, 2, 2)), n(size=(2, 3)), n(size=(2,))]),
        ("dynamic_conv1d", lambda x, k: proj("dyn", dynamic_conv1d(x, k)), [n(size=(2, 3, 6)), n(size=(2, 3, 3))]),
        ("linear", lambda x, w, b: proj("lin", linear(x, w, b)), [n(size=(3, 4)), n(size=(2, 4)), n(size=(2,))]),
        ("rms_norm", lambda x, g: proj("rms", rms_channel_norm(x, g)), [n(size=(2, 2, 3, 2, 2)), n(size=(2,))]),
        ("mean_pool", lambda x: proj("pool", global_avg_pool(x)), [n(size=(2, 3, 2, 2, 2))]),
        ("cross_entropy", lambda z: softmax_cross_entropy(z, [0, 2, 1]), [n(size=(3, 4))]),
        ("gather_neighborhood", lambda F: proj("gather", gather_neighborhood(F, 3)), [n(size=(1, 2, 3, 3, 3))]),
        ("window_scores", lambda q, k: proj("ws", window_scores(q, k)),
         [n(size=(1, 2, 2, 3, 3)), n(size=(1, 2, 9, 2, 3, 3))]),
        ("window_mix", lambda w, k: proj("wm", window_mix(w, k)),
         [n(size=(1, 9, 2, 3, 3)), n(size=(1, 2, 9, 2, 3, 3))]),
        ("frame_aggregate", lambda F: proj("fa", frame_aggregate(F, 3)[0]), [n(size=(1, 3, 3, 3, 3))]),
    ]
    C, T, H, W, k = 4, 8, 3, 3, 3
    w0, b0 = init_estimator(C, 2, T, k, rng, identity=True)
    cases.append((
        "dtf_mechanism",
        lambda F, w, b: proj("dtf", dtf_mechanism_forward(*frame_aggregate(F, k), w, b, 2)),
        [n(size=(1, C, T, H, W)), w0 + 0.05 * n(size=w0.shape), b0],
    ))
    return cases


def gradient_suite(seed: int = 0) -> list[CheckResult]:
    return [_below(f"grad.{name}", ag.grad_check(f, inputs), GRAD_TOL) for name, f, inputs in gradient_cases(seed)]


def backward_determinism(seed: int = 0) -> CheckResult:
    cfg = ModelConfig(channels=(4,), blocks=(1,), T=8, G=2, num_classes=2)
    params = build_net(cfg, seed)
    clip = np.random.default_rng(seed).normal(size=(2, 1, 8, 4, 4))

    def grads():
        tape = ag.Tape()
        vs = {name: tape.var(v) for name, v in params.items()}
        loss = softmax_cross_entropy(net_forward(vs, clip, cfg), [0, 1])
        g = ag.backward(loss)
        return b"".join(g[vs[name].id].tobytes() for name in params.names())

    return _flag("autograd.backward_determinism", grads() == grads())


# ---------------------------------------------------------------------------
# per-module properties


def _tensor_checks(rng) -> list[CheckResult]:
    worst = 0
    for _ in range(20):
        t = rng.normal(size=(2, 3, 4, 5))
        axes = tuple(rng.permutation(4))
        worst = max(worst, int(permute(permute(t, axes), inverse_permutation(axes)).tobytes() != t.tobytes()))
    assoc = 0.0
    for _ in range(20):
        a, b, c = (rng.normal(size=(4, 4)) for _ in range(3))
        left = matmul(matmul(a, b), c)
        assoc = max(assoc, np.max(np.abs(left - matmul(a, matmul(b, c)))) / np.max(np.abs(left)))
    return [_flag("tensor.permute_roundtrip", worst == 0), _below("tensor.matmul_associative", assoc, 1e-12)]


def convolution_theorem_error(rng, pairs: int = 1000, irfft=fft.irfft) -> float:
    worst = 0.0
    for _ in range(pairs):
        T = int(rng.integers(2, 65))
        f, g = rng.normal(size=T), rng.normal(size=T)
        out = irfft(fft.rfft(f) * fft.rfft(g), T)
        worst = max(worst, float(np.max(np.abs(out - fft.circular_convolve(f, g)))))
    return worst


def _fft_checks(rng, irfft) -> list[CheckResult]:
    parseval = naive = roundtrip = linear_err = 0.0
    hermitian = True
    for T in range(2, 65):
        x, y = rng.normal(size=T), rng.normal(size=T)
        s = fft.rfft(x)
        full = fft.hermitian_extend(s, T)
        energy = np.sum(x**2)
        parseval = max(parseval, abs(energy - np.sum(np.abs(full) ** 2) / T) / energy)
        ref = fft.dft_naive(ComplexSeq(x, np.zeros(T))).to_complex()[: len(s)]
        naive = max(naive, np.max(np.abs(s.to_complex() - ref)))
        roundtrip = max(roundtrip, np.max(np.abs(irfft(s, T) - x)))
        a, b = rng.normal(size=2)
        lhs = fft.rfft(a * x + b * y).to_complex()
        linear_err = max(linear_err, np.max(np.abs(lhs - (a * s.to_complex() + b * fft.rfft(y).to_complex()))))
        hermitian &= s.im[0] == 0.0 and (T % 2 or s.im[-1] == 0.0)
    return [
        _below("fft.rfft_matches_naive", naive, 1e-10),
        _below("fft.roundtrip", roundtrip, 1e-10),
        _below("fft.parseval", parseval, 1e-9),
        _below("fft.linearity", linear_err, 1e-10),
        _flag("fft.hermitian_endpoints", bool(hermitian)),
        _below("fft.convolution_theorem", convolution_theorem_error(rng, irfft=irfft), 1e-9),
    ]


def _nn_checks(rng) -> list[CheckResult]:
    x = rng.normal(size=(1, 2, 2, 4, 4))
    w, b = rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
    conv = max(
        np.max(np.abs(conv2d_3x3(x, w, b, stride=s) - conv2d_3x3_loop(x, w, b, stride=s))) for s in (1, 2)
    )
    x1 = rng.normal(size=(2, 3, 5, 2, 2))
    w1, b1 = rng.normal(size=(3, 3)), rng.normal(size=3)
    c1 = np.max(np.abs(conv1d_temporal(x1, w1, b1) - conv1d_temporal_loop(x1, w1, b1)))
    losses = [float(softmax_cross_entropy(rng.normal(scale=5, size=(4, 3)), rng.integers(0, 3, 4))) for _ in range(50)]
    uniform = abs(float(softmax_cross_entropy(np.zeros((3, 4)), [0, 1, 3])) - math.log(4))
    return [
        _below("nn.conv2d_matches_loop", conv, 1e-12),
        _below("nn.conv1d_matches_loop", c1, 1e-12),
        _flag("nn.cross_entropy_nonnegative", min(losses) >= 0),
        _below("nn.cross_entropy_uniform_ln_k", uniform, 1e-12),
    ]


def _fa_checks(rng) -> list[CheckResult]:
    F = rng.normal(size=(1, 4, 3, 5, 5))
    enh, wts = frame_aggregate(F, 3)
    ref_enh, ref_w = frame_aggregate_loop(F, 3)
    oracle = max(np.max(np.abs(enh - ref_enh)), np.max(np.abs(wts - ref_w)))
    mask = neighborhood_mask(5, 5, 3)[None, :, None]
    sums = np.max(np.abs(wts.sum(axis=1) - 1))
    masked_zero = bool(np.all(np.where(mask, 0.0, wts) == 0.0))
    keys = gather_neighborhood(F, 3)
    agg = enh - F
    inf = np.where(mask[:, None], keys, np.inf).min(axis=2)
    sup = np.where(mask[:, None], keys, -np.inf).max(axis=2)
    bound = float(max(np.max(inf - agg), np.max(agg - sup), 0.0))
    # translation by one pixel: compare locations whose windows stay inside both frames
    G = rng.normal(size=(1, 3, 3, 7, 8))
    shifted = np.zeros_like(G)
    shifted[..., 1:, :] = G[..., :-1, :]
    e0, _ = frame_aggregate(G, 3)
    e1, _ = frame_aggregate(shifted, 3)
    trans = np.max(np.abs(e1[..., 3:-1, 1:-1] - e0[..., 2:-2, 1:-1]))
    alpha = 2.5
    s0 = window_scores(F, keys)
    s1 = window_scores(alpha * F, gather_neighborhood(alpha * F, 3))
    scale = np.max(np.abs(s1 - alpha**2 * s0)) / np.max(np.abs(s0))
    s0m = np.where(mask, s0, -np.inf)[:, :, :-1]
    s1m = np.where(mask, s1, -np.inf)[:, :, :-1]
    argmax_same = bool(np.array_equal(s0m.argmax(axis=1), s1m.argmax(axis=1)))
    return [
        _below("fa.matches_loop", oracle, 1e-10),
        _below("fa.weights_sum_to_one", sums, 1e-9),
        _flag("fa.masked_weights_zero", masked_zero),
        _below("fa.convex_bound", bound, 1e-12),
        _below("fa.translation_equivariance", trans, 1e-12),
        _below("fa.score_scaling", scale, 1e-12),
        _flag("fa.argmax_scale_invariant", argmax_same),
    ]


def _const_filters(N, H, W, S_c: ComplexSeq):
    z = np.stack([S_c.re, S_c.im], axis=-1)
    return np.broadcast_to(z, (N, H, W) + z.shape).copy()


def _dtf_checks(rng, irfft) -> list[CheckResult]:
    N, C, T, H, W = 1, 3, 8, 2, 2
    M = fft.spectrum_size(T)
    F = rng.normal(size=(N, C, T, H, W))
    ones = ComplexSeq(np.ones((C, M)), np.zeros((C, M)))
    zeros = ComplexSeq(np.zeros((C, M)), np.zeros((C, M)))
    ident = np.max(np.abs(apply_filters(F, _const_filters(N, H, W, ones)) - 2 * F))
    zero = np.max(np.abs(apply_filters(F, _const_filters(N, H, W, zeros)) - F))
    delta = np.zeros(T)
    delta[1] = 1.0
    shift = fft.rfft(np.broadcast_to(delta, (C, T)))
    shift_err = np.max(np.abs(apply_filters(F, _const_filters(N, H, W, shift)) - (F + np.roll(F, 1, axis=2))))
    # modulation path against circular convolution with the exported kernel
    S_c = ComplexSeq(rng.normal(size=(C, M)), rng.normal(size=(C, M)))
    kern = export_equivalent_kernel(S_c, T)
    f = rng.normal(size=(C, T))
    path = irfft(fft.rfft(f) * S_c, T)
    equiv = np.max(np.abs(path - fft.circular_convolve(f, kern)))
    # receptive field of the temporal path alone
    wide = fft.rfft(rng.normal(size=(C, T)))
    far = _frame_sensitivity(lambda h: apply_filters(h, _const_filters(N, H, W, wide)), (N, C, T, H, W))
    near = _frame_sensitivity(
        lambda h: conv1d_temporal(h, rng.normal(size=(C, 3)), np.zeros(C)), (N, C, T, H, W)
    )
    # estimator sees only its own location: equal slices give equal filters
    Fs = rng.normal(size=(1, 4, T, 1, 3))
    Fs[..., 2] = Fs[..., 0]
    cor = rng.uniform(size=(1, 9, T, 1, 3))
    cor[..., 2] = cor[..., 0]
    w0, b0 = init_estimator(4, 2, T, 3, rng, identity=False)
    w0 = rng.normal(size=w0.shape)
    filt = predict_filters(Fs, cor, w0, b0, 2)
    same = np.array_equal(filt[:, :, 0], filt[:, :, 2])
    differ = np.max(np.abs(filt[:, :, 0] - filt[:, :, 1])) > 0
    # arbitrary estimator output still yields a real signal
    residue = 0.0
    for _ in range(20):
        s = ComplexSeq(rng.normal(size=(C, M)) * 10, rng.normal(size=(C, M)) * 10)
        residue = max(residue, np.max(np.abs(np.fft.ifft(fft.hermitian_extend(s, T)).imag)))
    return [
        _below("dtf.identity_filter_doubles", ident, 1e-10),
        _below("dtf.zero_filter_identity", zero, 1e-10),
        _below("dtf.shifted_delta", shift_err, 1e-10),
        _below("dtf.equivalence_theorem", equiv, 1e-9),
        _flag("dtf.receptive_field_global", far > 0 and near == 0),
        _flag("dtf.spatial_awareness", bool(same and differ)),
        _below("dtf.output_real", residue, 1e-9),
    ]


def _frame_sensitivity(op, shape, out_frame: int = -1, in_frame: int = 0) -> float:
    """Largest |d out[:, :, out_frame] / d in[:, :, in_frame]| entry, probed by reverse mode."""
    rng = np.random.default_rng(7)
    tape = ag.Tape()
    h = tape.var(rng.normal(size=shape))
    out = op(h)
    sel = np.zeros(shape)
    sel[:, :, out_frame] = 1.0
    g = ag.backward(ag.sum(ag.mul(out, sel)))
    return float(np.max(np.abs(g.get(h.id, np.zeros(shape))[:, :, in_frame])))


def receptive_field_probe(variant: str, T: int = 16, seed: int = 0, perturb: float = 0.1) -> float:
    """Sensitivity of frame ``T-1`` of one block's temporal path to its frame 0.

    The estimator or filter weights are perturbed away from their initial
    values so the probe sees a generic filter.
    """
    C = 4
    cfg = ModelConfig(channels=(C,), blocks=(1,), variant=variant, T=T, G=2, num_classes=2)
    params = build_net(cfg, seed)
    rng = np.random.default_rng(seed + 1)
    for name in params.names():
        if ".estimator." in name or ".filter." in name:
            params[name] = params[name] + perturb * rng.normal(size=params[name].shape)
    return _frame_sensitivity(lambda h: temporal_op(h, params, "block0", variant, cfg), (1, C, T, 3, 3))


def _model_checks(seed) -> list[CheckResult]:
    rf_1d = receptive_field_probe("dtf_1d", seed=seed)
    rf_dtf = receptive_field_probe("dtf", seed=seed)
    n16 = build_net(ModelConfig(channels=(16,), blocks=(1,), T=16, G=16), 0).num_params()
    n1 = build_net(ModelConfig(channels=(16,), blocks=(1,), T=16, G=1), 0).num_params()
    nf = build_net(ModelConfig(channels=(16,), blocks=(1,), T=16, variant="dtf_f"), 0).num_params()
    micro = []
    rng = np.random.default_rng(seed)
    clip = rng.normal(size=(2, 1, 4, 3, 3))
    for variant in ("none", "dtf_1d", "dtf_1d_plus", "dtf_f", "dtf"):
        cfg = ModelConfig(channels=(2,), blocks=(1,), variant=variant, T=4, G=1, num_classes=2)
        p = build_net(cfg, seed)
        names = p.names()
        logits = net_forward(p, clip, cfg)
        ok_shape = logits.shape == (2, 2)

        def f(*vals, cfg=cfg, names=names):
            return softmax_cross_entropy(net_forward(dict(zip(names, vals)), clip, cfg), [0, 1])

        micro.append(_below(f"model.grad_check.{variant}", ag.grad_check(f, [p[n] for n in names]) if ok_shape
                            else 1.0, GRAD_TOL))
    return [
        _flag("model.receptive_field_separation", rf_1d == 0 and rf_dtf > 0),
        _flag("model.param_count_ordering", n16 < n1 and nf < n16),
        *micro,
    ]


def _data_checks(seed) -> list[CheckResult]:
    spec = ClipSpec(sigma=0.1)
    lo, hi = math.inf, -math.inf
    for i in range(16):
        clip, _ = generate_clip(spec, i % spec.num_classes, seed + i)
        lo, hi = min(lo, clip.min()), max(hi, clip.max())
    return [_flag("data.value_range", lo >= -1 and hi <= 2)]


def _training_checks() -> list[CheckResult]:
    total = 100
    lrs = [cosine_lr(s, total, 0.04) for s in range(total + 1)]
    monotone = all(b <= a for a, b in zip(lrs, lrs[1:]))
    ends = max(abs(lrs[0] - 0.04), abs(lrs[-1]))
    return [_flag("training.cosine_lr_nonincreasing", monotone), _below("training.cosine_lr_endpoints", ends, 1e-15)]


def run_verification(seed: int = 0, irfft=None, stream: TextIO | None = sys.stdout,
                     gradients: bool = True) -> list[CheckResult]:
    """Run every property check; ``irfft`` may replace the inverse transform under test."""
    irfft = irfft or fft.irfft
    rng = np.random.default_rng(seed)
    results = []
    results += _tensor_checks(rng)
    results += _fft_checks(rng, irfft)
    results += _nn_checks(rng)
    results += _fa_checks(rng)
    results += _dtf_checks(rng, irfft)
    if gradients:
        results += gradient_suite(seed)
        results.append(backward_determinism(seed))
        results += _model_checks(seed)
    results += _data_checks(seed)
    results += _training_checks()
    if stream is not None:
        for r in results:
            print(r.line(), file=stream)
        failed = sum(not r.passed for r in results)
        print(f"{len(results) - failed}/{len(results)} checks passed", file=stream)
    return results
