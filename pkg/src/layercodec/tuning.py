"""Derivative-free two-stage tuning.

Stage I tunes sigma-topk keep fractions by coordinate grid search, one layer
at a time, with everything downstream frozen. Stage II tunes adapter weights
by coordinate perturbation with the codec and task heads frozen.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .adapters import AdapterWeights, TaskHead, adapted_float, pad_refs
from .entropy import element_bits, expand_side_info, extract_side_info, side_info_rate
from .errors import InvalidInput
from .image import TransformConfig, analysis, synthesis
from .objectives import adapter_loss, cumulative_rd_loss, mse, rd_loss
from .partition import SIGMA_TOPK, PredictorConfig, topk_counts
from .tensors import quantize
from .video import VideoConfig, encode_video

GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))


@dataclass
class Stage1Result:
    config: PredictorConfig
    loss: float
    initial_loss: float
    history: list = field(default_factory=list)   # (layer, keep, loss) per evaluation


def _map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(jobs) as ex:
        return list(ex.map(fn, items))


class _ImageCase:
    """Per-image state that does not depend on the keep fractions."""

    def __init__(self, image, cfg: TransformConfig):
        self.image = image
        self.cfg = cfg
        self.latent = quantize(analysis(image, cfg))
        side = extract_side_info(self.latent)
        self.field = expand_side_info(side, self.latent.dims)
        self.side_bits = side_info_rate(side)
        bits = element_bits(self.latent, self.field).reshape(-1)
        sig = self.field.sigma.reshape(-1)
        self.order = np.lexsort((np.arange(sig.size), -sig))
        self.cum_bits = np.concatenate([[0.0], np.cumsum(bits[self.order])])
        self.pixels = image.height * image.width
        self._targets = {}

    def target(self, head):
        if head not in self._targets:
            self._targets[head] = head(self.image)
        return self._targets[head]

    def prefix_image(self, covered_count: int):
        flat = self.field.mu.reshape(-1).copy()
        idx = self.order[:covered_count]
        flat[idx] = self.latent.flat[idx]
        return synthesis(flat.reshape(self.latent.dims), self.cfg, self.image.height, self.image.width)

    def loss(self, covered_count: int, head, lam: float) -> float:
        rate = self.side_bits + self.cum_bits[covered_count]
        d = mse(head(self.prefix_image(covered_count)), self.target(head))
        return rd_loss(rate, self.pixels, d, lam)


def _image_layer_loss(cases, keep, layer, n, head, lam, jobs):
    def one(case):
        counts = topk_counts(keep, case.latent.values.size, n)
        return case.loss(sum(counts[: layer + 1]), head, lam)
    return float(np.mean(_map(one, cases, jobs)))


def _heads_for(heads, n):
    if heads is None:
        return [TaskHead("A")] * max(n - 1, 1)
    if isinstance(heads, TaskHead):
        return [heads] * max(n - 1, 1)
    return list(heads)


def tune_stage1(corpus, n: int, lam: float, cfg: PredictorConfig | None = None, heads=None,
                q: float = 1.0, grid=GRID, jobs: int = 1) -> Stage1Result:
    """Grid search over the keep fraction of each machine layer, in layer order.

    The loss of layer ``i`` is the corpus mean of ``bpp(side + layers 1..i) +
    lam * MSE(head_i(decoded prefix i), head_i(original))``.
    """
    corpus = list(corpus)
    if not corpus:
        raise InvalidInput("empty tuning corpus")
    cfg = cfg or PredictorConfig()
    if cfg.kind != SIGMA_TOPK:
        raise InvalidInput("stage-I grid search tunes sigma-topk predictors only")
    heads = _heads_for(heads, n)
    tcfg = TransformConfig(q)
    cases = _map(lambda im: _ImageCase(im, tcfg), corpus, jobs)

    keep = list(cfg.keep) + [0.0] * max(0, n - 1 - len(cfg.keep))
    keep = keep[: n - 1]
    history = []
    losses = []
    initial = []
    for i in range(n - 1):
        head = heads[i]
        base = _image_layer_loss(cases, keep, i, n, head, lam, jobs)
        initial.append(base)
        best_k, best = keep[i], base
        budget = 1.0 - sum(keep[:i])
        for k in grid:
            if k > budget + 1e-9:
                break
            trial = keep[:i] + [k] + keep[i + 1:]
            loss = _image_layer_loss(cases, trial, i, n, head, lam, jobs)
            history.append((i + 1, k, loss))
            if loss < best:
                best_k, best = k, loss
        keep[i] = best_k
        # later layers must still fit after this choice
        over = sum(keep) - 1.0
        for j in range(n - 2, i, -1):
            if over <= 1e-9:
                break
            cut = min(keep[j], over)
            keep[j] -= cut
            over -= cut
        losses.append(best)
    keep = [k for k in keep if k > 0] if n > 1 else list(cfg.keep)
    tuned = cfg.with_keep(keep if keep else cfg.keep)
    return Stage1Result(tuned, float(np.sum(losses)), float(np.sum(initial)), history)


def video_branch_loss(sequences, vcfg: VideoConfig, branch: int, head, lam: float,
                      jobs: int = 1) -> float:
    """Corpus mean of the cumulative RD loss of one branch over its inter frames."""

    def one(frames):
        enc = encode_video(frames, vcfg, entropy_code=False)
        pixels = frames[0].height * frames[0].width
        terms = []
        for t, (st, src) in enumerate(zip(enc.stats, frames)):
            if st.intra:
                continue
            rec = enc.recons[branch - 1][t]
            terms.append((st.motion_bits[branch - 1], st.residual_bits[branch - 1],
                          mse(head(rec), head(src))))
        if not terms:
            raise InvalidInput("tuning sequences need at least one inter frame")
        return cumulative_rd_loss(terms, len(terms), lam, pixels)

    return float(np.mean(_map(one, sequences, jobs)))


def tune_stage1_video(sequences, lam: float, vcfg: VideoConfig | None = None, heads=None,
                      grid=GRID, jobs: int = 1):
    """Coordinate grid search over motion then residual keep fractions, layer by layer.

    Returns ``(tuned VideoConfig, loss, initial_loss, history)``.
    """
    sequences = [list(s) for s in sequences]
    if not sequences:
        raise InvalidInput("empty tuning corpus")
    vcfg = vcfg or VideoConfig()
    n = vcfg.n
    if vcfg.motion.kind != SIGMA_TOPK or vcfg.residual.kind != SIGMA_TOPK:
        raise InvalidInput("stage-I grid search tunes sigma-topk predictors only")
    heads = _heads_for(heads, n)
    history, losses, initial = [], [], []

    def padded(keep):
        keep = list(keep) + [0.0] * max(0, n - 1 - len(keep))
        return keep[: n - 1]

    def with_keep(cfg, role, keep):
        keep = [k for k in keep if k > 0] or [GRID[0]]
        return replace(cfg, **{role: getattr(cfg, role).with_keep(keep)})

    for i in range(n - 1):
        for role in ("motion", "residual"):
            keep = padded(getattr(vcfg, role).keep)
            base = video_branch_loss(sequences, vcfg, i + 1, heads[i], lam, jobs)
            if role == "motion":
                initial.append(base)
            best_k, best = keep[i], base
            budget = 1.0 - sum(keep[:i])
            for k in grid:
                if k > budget + 1e-9:
                    break
                trial = keep[:i] + [k] + keep[i + 1:]
                if sum(trial) > 1.0 + 1e-9:
                    continue
                loss = video_branch_loss(sequences, with_keep(vcfg, role, trial), i + 1,
                                         heads[i], lam, jobs)
                history.append((i + 1, role, k, loss))
                if loss < best:
                    best_k, best = k, loss
            keep[i] = best_k
            if sum(keep) <= 1.0 + 1e-9:
                vcfg = with_keep(vcfg, role, keep)
        losses.append(best)
    return vcfg, float(np.sum(losses)), float(np.sum(initial)), history


# --- stage II ---------------------------------------------------------------

@dataclass
class AdapterCase:
    """One tuning sample: decoded frame, task target, optional newest-first refs."""

    xhat: object
    target: np.ndarray
    refs: list | None = None


def stage2_loss(cases, w: AdapterWeights, head: TaskHead) -> float:
    vals = []
    for c in cases:
        refs = pad_refs(c.refs) if w.video else None
        vals.append(adapter_loss(head(adapted_float(c.xhat, w, refs)), c.target))
    return float(np.mean(vals))


@dataclass
class Stage2Result:
    weights: AdapterWeights
    loss: float
    initial_loss: float
    evaluations: int
    history: list = field(default_factory=list)   # best-so-far loss after each evaluation


def _coordinate_order(w: AdapterWeights) -> np.ndarray:
    """Round-robin over tensors, output side first.

    From zero weights only the output bias has any effect and each layer
    becomes live once the one after it is non-zero, so every pass touches
    every tensor once instead of exhausting the first one.
    """
    ranges, pos = [], 0
    for name in w.names():
        size = w.tensors[name].size
        ranges.append(list(range(pos, pos + size)))
        pos += size
    ranges.reverse()
    order = []
    for j in range(max((len(r) for r in ranges), default=0)):
        order.extend(r[j] for r in ranges if j < len(r))
    return np.array(order, dtype=np.int64)


def tune_stage2(cases, w: AdapterWeights, head: TaskHead, budget: int = 200, step: float = 0.05,
                min_step: float = 1e-4) -> Stage2Result:
    """Accept-only-improving coordinate perturbation of the adapter weights.

    Coordinates are visited in :func:`_coordinate_order`. A visit tries
    ``+step`` then ``-step`` (one evaluation each). On success it stays on the
    coordinate; when both moves make things worse it halves the coordinate's
    step and tries again, until the step drops below ``min_step``.
    Coordinates with no effect on the loss are left at once with their step
    intact. Every evaluation counts against ``budget``.
    """
    cases = list(cases)
    best_w = w
    best_vec = w.flat().astype(np.float64)
    best = stage2_loss(cases, w, head)
    initial = best
    history = []
    order = _coordinate_order(w)
    steps = np.full(best_vec.size, float(step))
    evals, ci = 0, 0
    while evals < budget and order.size:
        if not np.any(steps >= min_step):
            break
        k = order[ci % order.size]
        ci += 1
        if steps[k] < min_step:
            continue
        while evals < budget and steps[k] >= min_step:
            improved, flat = False, True
            for sign in (1.0, -1.0):
                if evals >= budget:
                    break
                trial = best_vec.copy()
                trial[k] += sign * steps[k]
                tw = best_w.with_flat(trial)
                loss = stage2_loss(cases, tw, head)
                evals += 1
                flat &= loss == best
                if loss < best:
                    best, best_w, best_vec = loss, tw, tw.flat().astype(np.float64)
                    improved = True
                history.append(best)
                if improved:
                    break
            if flat:
                break
            if not improved:
                steps[k] /= 2
    return Stage2Result(best_w, best, initial, evals, history)
