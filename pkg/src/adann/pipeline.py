"""Equalizer pipeline: features, batching, training loops and BER metrics.

Feature vectors concatenate the samples of ``2L + 1`` consecutive symbols
centered on the target, so symbols within ``L`` of a stream edge are
skipped.  Online processing groups interior symbols into consecutive
non-overlapping batches (trailing partial batch dropped), scores each batch
with the current model *before* updating on it, and smooths bit error rates
with a trailing window.

Convergence after a drift event requires two conditions at once: the mean
raw BER over the most recent ``window`` batches falls below the threshold,
and the cumulative BER over the drifted segment so far is also below the
threshold.  The earliest evaluable point is ``window`` batches into the
segment.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import optim, semisup
from .chansim import Modulation, SymbolStream, gray_bit_distance
from .errors import DegenerateInputError, ShapeError, UsageError
from .nn import Architecture, Mlp, MultCounter, forward_batch
from .semisup import LossKind, SslConfig, SslDiagnostics

TRACE_COLUMNS = ("batch_index", "segment", "errors", "symbols",
                 "raw_ber", "smoothed_ber")


@dataclass(frozen=True)
class Batch:
    """One update's worth of feature rows, in chronological order."""

    features: np.ndarray          # (N, gamma * (2L + 1))
    indices: np.ndarray           # symbol indices into the source stream
    labels: np.ndarray | None     # present in simulation for scoring only


@dataclass(frozen=True)
class OfflineConfig:
    epochs: int = 200
    batch_size: int = 16384
    optimizer: optim.OptimizerConfig = field(default_factory=lambda: optim.OptimizerConfig(
        optim.OptimizerKind.MOMENTUM, learning_rate=0.004, beta=0.9))
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise UsageError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise UsageError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class OnlineConfig:
    window_half_width: int = 5           # L
    batch_size: int = 8192               # N_b
    loss_kind: LossKind = LossKind.AUG_VAT
    ssl: SslConfig = field(default_factory=lambda: SslConfig(sigma=0.15, epsilon=0.3))
    optimizer: optim.OptimizerConfig = field(default_factory=lambda: optim.OptimizerConfig(
        optim.OptimizerKind.ADAM, learning_rate=0.01, beta1=0.9, beta2=0.999))
    smoothing_window: int = 8
    ber_threshold: float = 1e-3
    adapt: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.window_half_width < 0:
            raise UsageError(f"window_half_width must be >= 0, got {self.window_half_width}")
        if self.batch_size < 1:
            raise UsageError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.smoothing_window < 1:
            raise UsageError(f"smoothing_window must be >= 1, got {self.smoothing_window}")


@dataclass
class BatchRecord:
    batch_index: int
    segment: int
    errors: int          # symbol errors
    symbols: int
    raw_ber: float       # bit errors / bits
    smoothed_ber: float = 0.0


@dataclass
class BerTrace:
    """Per-batch error records plus segment bookkeeping."""

    modulation: Modulation
    records: list = field(default_factory=list)
    segment_starts: dict = field(default_factory=dict)  # segment -> first batch index

    def raw_bers(self, segment=None):
        return [r.raw_ber for r in self.records
                if segment is None or r.segment == segment]

    def final_ber(self, segment) -> float:
        bits_per = self.modulation.bits_per_symbol
        bit_errors = sum(r.raw_ber * r.symbols * bits_per for r in self.records
                         if r.segment == segment)
        bits = sum(r.symbols * bits_per for r in self.records if r.segment == segment)
        if bits == 0:
            raise UsageError(f"trace has no batches for segment {segment}")
        return bit_errors / bits


def interior_bounds(n_seq: int, half_width: int):
    """Inclusive index range of symbols with a full feature window."""
    lo = half_width
    hi = n_seq - 1 - half_width
    return lo, hi


def build_feature(stream: SymbolStream, i: int, half_width: int) -> np.ndarray:
    """Samples of symbols ``i - L .. i + L`` concatenated."""
    lo, hi = interior_bounds(stream.n_seq, half_width)
    if not lo <= i <= hi:
        raise UsageError(
            f"symbol {i} is within {half_width} of a stream edge "
            f"(valid range {lo}..{hi})")
    g = stream.gamma
    return np.array(stream.samples[(i - half_width) * g:(i + half_width + 1) * g])


def feature_rows(stream: SymbolStream, half_width: int) -> np.ndarray:
    """Read-only (n_interior, gamma*(2L+1)) view; row j is symbol L + j."""
    width = stream.gamma * (2 * half_width + 1)
    if stream.samples.size < width:
        raise UsageError("stream too short for the feature window")
    return np.lib.stride_tricks.sliding_window_view(
        stream.samples, width)[::stream.gamma]


def collect_batches(stream: SymbolStream, half_width: int, batch_size: int,
                    with_labels: bool = True):
    """Consecutive non-overlapping batches of interior symbols."""
    lo, hi = interior_bounds(stream.n_seq, half_width)
    n_interior = hi - lo + 1
    if n_interior < batch_size:
        raise UsageError(
            f"stream with {n_interior} interior symbols cannot fill a batch "
            f"of {batch_size}")
    rows = feature_rows(stream, half_width)
    batches = []
    for start in range(0, n_interior - batch_size + 1, batch_size):
        idx = np.arange(lo + start, lo + start + batch_size)
        labels = stream.labels[idx] if with_labels else None
        batches.append(Batch(rows[start:start + batch_size], idx, labels))
    return batches


def count_bit_errors(true_labels, decisions, modulation: Modulation) -> int:
    """Total bit errors under the Gray mapping."""
    true_labels = np.asarray(true_labels, dtype=np.int64)
    decisions = np.asarray(decisions, dtype=np.int64)
    if true_labels.shape != decisions.shape:
        raise ShapeError(
            f"label/decision shapes differ: {true_labels.shape} vs {decisions.shape}")
    return int(gray_bit_distance(true_labels, decisions, modulation).sum())


def symbol_errors_to_ber(true_labels, decisions, modulation: Modulation) -> float:
    """Bit error rate implied by symbol decisions (Gray mapping)."""
    true_labels = np.asarray(true_labels, dtype=np.int64)
    bit_errors = count_bit_errors(true_labels, decisions, modulation)
    return bit_errors / (len(true_labels) * modulation.bits_per_symbol)


def smoothed_ber(raw, window: int):
    """Trailing mean: entry t averages raw[max(0, t - window + 1) .. t]."""
    if window < 1:
        raise UsageError(f"window must be >= 1, got {window}")
    out = []
    acc = 0.0
    for t, v in enumerate(raw):
        acc += v
        if t >= window:
            acc -= raw[t - window]
        out.append(acc / min(t + 1, window))
    return out


def _attach_smoothed(trace: BerTrace, window: int):
    sm = smoothed_ber([r.raw_ber for r in trace.records], window)
    for r, v in zip(trace.records, sm):
        r.smoothed_ber = v


def convergence_time(trace: BerTrace, threshold: float, window: int,
                     segment: int = 2):
    """Batches into ``segment`` until both convergence conditions hold.

    Returns the smallest n >= window such that the mean raw BER of the
    last ``window`` segment batches and the cumulative segment BER are both
    below ``threshold``; None if that never happens.
    """
    seg = [r for r in trace.records if r.segment == segment]
    if not seg:
        raise UsageError(f"trace has no batches for segment {segment}")
    bits_per = trace.modulation.bits_per_symbol
    raw = [r.raw_ber for r in seg]
    bit_errs = [r.raw_ber * r.symbols * bits_per for r in seg]
    bits = [r.symbols * bits_per for r in seg]
    cum_err = np.cumsum(bit_errs)
    cum_bits = np.cumsum(bits)
    for n in range(window, len(seg) + 1):
        recent = sum(raw[n - window:n]) / window
        overall = cum_err[n - 1] / cum_bits[n - 1]
        if recent < threshold and overall < threshold:
            return n
    return None


@dataclass
class OfflineResult:
    model: Mlp
    epoch_losses: list


def train_offline(mlp: Mlp, stream: SymbolStream, fraction: float,
                  cfg: OfflineConfig) -> OfflineResult:
    """Supervised mini-batch cross-entropy training on a labeled prefix.

    Uses the first ``fraction`` of interior symbols; batch order is
    reshuffled every epoch, deterministically from ``cfg.seed``.
    """
    if stream.labels is None:
        raise UsageError("offline training requires labels")
    if not 0.0 < fraction <= 1.0:
        raise UsageError(f"fraction must be in (0, 1], got {fraction}")
    half = _infer_half_width(mlp.arch, stream)
    lo, hi = interior_bounds(stream.n_seq, half)
    n_train = int(fraction * (hi - lo + 1))
    if n_train < 1:
        raise UsageError("training fraction selects no symbols")
    rows = feature_rows(stream, half)[:n_train]
    labels = stream.labels[lo:lo + n_train].astype(np.int64)

    model = mlp
    state = optim.make_state(mlp.arch)
    epoch_losses = []
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, epoch]))
        perm = rng.permutation(n_train)
        total = 0.0
        for start in range(0, n_train, cfg.batch_size):
            sel = perm[start:start + cfg.batch_size]
            batch = Batch(rows[sel], sel, labels[sel])
            res = semisup.batch_loss_and_grads(
                model, batch, LossKind.CROSS_ENTROPY, SslConfig(),
                rng=None)
            model, state = optim.step(state, model, res.grads, cfg.optimizer)
            total += res.loss * len(sel)
        epoch_losses.append(total / n_train)
    return OfflineResult(model, epoch_losses)


def _infer_half_width(arch: Architecture, stream: SymbolStream) -> int:
    width = arch.input_dim
    g = stream.gamma
    if width % g != 0 or (width // g) % 2 != 1:
        raise ShapeError(
            f"input_dim {width} is not gamma * (2L + 1) for gamma = {g}")
    return (width // g - 1) // 2


@dataclass
class OnlineResult:
    trace: BerTrace
    model: Mlp
    initial_model: Mlp
    diagnostics: SslDiagnostics
    mult_counter: MultCounter


def evaluate_ber(mlp: Mlp, stream: SymbolStream, half_width: int,
                 batch_size: int = 16384, skip_rows: int = 0) -> float:
    """BER of a frozen model over interior symbols (optionally skipping a prefix)."""
    lo, hi = interior_bounds(stream.n_seq, half_width)
    rows = feature_rows(stream, half_width)[skip_rows:]
    labels = stream.labels[lo + skip_rows:hi + 1].astype(np.int64)
    if len(labels) == 0:
        raise UsageError("no symbols left to evaluate")
    bit_errors = 0
    for start in range(0, len(labels), batch_size):
        chunk = rows[start:start + batch_size]
        preds = np.argmax(forward_batch(mlp, chunk).probs, axis=1)
        bit_errors += count_bit_errors(labels[start:start + batch_size], preds,
                                       stream.spec.modulation)
    return bit_errors / (len(labels) * stream.spec.modulation.bits_per_symbol)


def run_online(mlp: Mlp, streams, cfg: OnlineConfig) -> OnlineResult:
    """Process segments sequentially: score each batch, then update on it.

    ``streams`` is the ordered list of captures (typically set1 then set2).
    True labels are used only to count errors; with a pseudo-label loss the
    batch handed to the loss function carries no labels at all.
    """
    modulation = streams[0].spec.modulation
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x0EA11]))
    counter = MultCounter()
    diag = SslDiagnostics()
    trace = BerTrace(modulation)
    model = mlp
    state = optim.make_state(mlp.arch)
    batch_index = 0
    for seg_num, stream in enumerate(streams, start=1):
        if stream.spec.modulation is not modulation:
            raise UsageError("all segments must share one modulation")
        trace.segment_starts[seg_num] = batch_index
        for batch in collect_batches(stream, cfg.window_half_width, cfg.batch_size):
            if cfg.adapt:
                training_batch = batch if cfg.loss_kind.needs_labels else Batch(
                    batch.features, batch.indices, None)
                res = semisup.batch_loss_and_grads(
                    model, training_batch, cfg.loss_kind, cfg.ssl, rng,
                    counter=counter, diag=diag)
                preds = res.predictions
            else:
                preds = np.argmax(
                    forward_batch(model, batch.features, counter).probs, axis=1)
            truth = batch.labels.astype(np.int64)
            sym_errors = int((preds != truth).sum())
            bit_errors = count_bit_errors(truth, preds, modulation)
            raw = bit_errors / (len(truth) * modulation.bits_per_symbol)
            trace.records.append(BatchRecord(batch_index, seg_num, sym_errors,
                                             len(truth), raw))
            if cfg.adapt:
                model, state = optim.step(state, model, res.grads, cfg.optimizer)
            batch_index += 1
    _attach_smoothed(trace, cfg.smoothing_window)
    return OnlineResult(trace, model, mlp, diag, counter)


@dataclass(frozen=True)
class WeightChangeRow:
    layer: int
    s_init: float
    s_delta: float
    ratio: float


@dataclass(frozen=True)
class WeightChangeReport:
    rows: tuple


def weight_change_ratios(initial: Mlp, final: Mlp) -> WeightChangeReport:
    """Per-layer absolute-sum change ratios between two parameter sets."""
    if initial.arch != final.arch:
        raise ShapeError("weight change requires identical architectures")
    rows = []
    for k, (w0, w1) in enumerate(zip(initial.weights, final.weights), start=1):
        s_init = float(np.abs(w0).sum())
        s_delta = float(np.abs(w1 - w0).sum())
        if s_init == 0.0:
            raise DegenerateInputError(f"layer {k} initial weights are all zero")
        rows.append(WeightChangeRow(k, s_init, s_delta, s_delta / s_init))
    return WeightChangeReport(tuple(rows))


def write_trace_csv(trace: BerTrace, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_COLUMNS)
        for r in trace.records:
            writer.writerow([r.batch_index, r.segment, r.errors, r.symbols,
                             repr(r.raw_ber), repr(r.smoothed_ber)])


def read_trace_csv(path, modulation: Modulation) -> BerTrace:
    trace = BerTrace(modulation)
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            rec = BatchRecord(int(row["batch_index"]), int(row["segment"]),
                              int(row["errors"]), int(row["symbols"]),
                              float(row["raw_ber"]), float(row["smoothed_ber"]))
            trace.records.append(rec)
            trace.segment_starts.setdefault(rec.segment, rec.batch_index)
    return trace


def write_weight_report_csv(report: WeightChangeReport, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["k", "S_init", "S_delta", "r_k"])
        for row in report.rows:
            writer.writerow([row.layer, repr(row.s_init), repr(row.s_delta),
                             repr(row.ratio)])


def trace_summary(trace: BerTrace, threshold: float, window: int,
                  loss_kind: str, config_hash: str) -> dict:
    """Summary dict written next to each trace CSV."""
    conv = (convergence_time(trace, threshold, window)
            if 2 in trace.segment_starts else None)
    return {
        "final_ber_set1": trace.final_ber(1),
        "final_ber_set2": trace.final_ber(2) if 2 in trace.segment_starts else None,
        "convergence_batches": conv,
        "loss_kind": loss_kind,
        "config_hash": config_hash,
    }


def write_summary_json(summary: dict, path):
    Path(path).write_text(json.dumps(summary, sort_keys=True) + "\n")
