"""Supervised comparison systems: MLSE over LMS-estimated taps, and
short-training-sequence fine-tuning of the network.

The MLSE baseline models the link as a linear symbol-rate FIR (taps
estimated by LMS from true labels) and runs Viterbi detection over
``M ** (l_ch - 1)`` states with squared-error branch metrics.  It consumes
exactly the same batch boundaries as the online equalizer: detect the batch
with the current taps, record errors, then refresh the taps on that batch.
Nonlinearity is deliberately absent from its channel hypothesis.

``supervised_finetune`` retrains the network at the start of each segment
on a labeled prefix (fraction ``gamma`` of the segment), then equalizes the
rest of the segment without further adaptation.
"""

from dataclasses import dataclass

import numpy as np

from . import backend, optim, semisup
from .chansim import PAM4_LEVELS, Modulation, SymbolStream
from .errors import ConfigError, ShapeError, UsageError
from .nn import Mlp, forward_batch
from .pipeline import (Batch, BatchRecord, BerTrace, OnlineConfig,
                       _attach_smoothed, collect_batches, count_bit_errors,
                       feature_rows, interior_bounds)

ALLOWED_MEMORY = (1, 3, 5, 7)


@dataclass(frozen=True)
class LmsChannel:
    """Symbol-rate FIR estimate plus its LMS step size."""

    taps: np.ndarray
    mu: float

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 1 or len(taps) not in ALLOWED_MEMORY:
            raise ConfigError(
                f"tap count must be one of {ALLOWED_MEMORY}, got shape {taps.shape}")
        if not np.all(np.isfinite(taps)):
            raise UsageError("taps must be finite")
        if not self.mu > 0:
            raise ConfigError(f"mu must be > 0, got {self.mu}")
        taps.flags.writeable = False
        object.__setattr__(self, "taps", taps)

    @property
    def memory(self) -> int:
        return len(self.taps)


def lms_update(ch: LmsChannel, recent_symbols, observed: float) -> LmsChannel:
    """One supervised LMS step: h += mu * (observed - h.x) * x.

    ``recent_symbols[j]`` is the amplitude sent ``j`` symbols ago (current
    symbol first).
    """
    x = np.asarray(recent_symbols, dtype=np.float64)
    if x.shape != (ch.memory,):
        raise ShapeError(f"recent_symbols must have shape ({ch.memory},), got {x.shape}")
    err = float(observed) - float(ch.taps @ x)
    return LmsChannel(ch.taps + ch.mu * err * x, ch.mu)


def mlse_detect(samples, ch: LmsChannel, levels=PAM4_LEVELS,
                init_metrics=None):
    """Viterbi detection of symbol-rate samples against the FIR hypothesis.

    Returns ``(level_indices, final_metrics)``; ``init_metrics`` carries
    survivor metrics across consecutive blocks (None starts all states at
    zero).
    """
    return backend.viterbi_block(np.asarray(samples, dtype=np.float64),
                                 ch.taps, np.asarray(levels, dtype=np.float64),
                                 init_metrics)


def _rail_amplitudes(labels, modulation: Modulation):
    """True level ranks and amplitudes per rail: one rail for PAM4, I/Q for 16QAM."""
    labels = np.asarray(labels, dtype=np.int64)
    if modulation is Modulation.PAM4:
        return [(labels, PAM4_LEVELS[labels])]
    return [(labels // 4, PAM4_LEVELS[labels // 4]),
            (labels % 4, PAM4_LEVELS[labels % 4])]


def _rail_center_samples(stream: SymbolStream):
    """Per-rail symbol-rate samples (center sample of each symbol)."""
    g = stream.gamma
    samples = stream.samples
    if stream.spec.modulation is Modulation.PAM4:
        return [samples[g // 2::g][:stream.n_seq]]
    half = g // 2
    base = 2 * (half // 2)
    return [samples[base::g][:stream.n_seq], samples[base + 1::g][:stream.n_seq]]


def _combine_rail_decisions(rail_decisions, modulation: Modulation):
    if modulation is Modulation.PAM4:
        return rail_decisions[0]
    return 4 * rail_decisions[0] + rail_decisions[1]


def run_mlse_baseline(streams, l_ch: int, mu: float, cfg: OnlineConfig,
                      update_every: int = 1) -> BerTrace:
    """Batchwise MLSE with supervised LMS tap refreshes.

    Taps start at zero and persist across segments; Viterbi survivor metrics
    and the amplitude history reset at each segment boundary (segments are
    independent captures).
    """
    if l_ch not in ALLOWED_MEMORY:
        raise ConfigError(f"l_ch must be one of {ALLOWED_MEMORY}, got {l_ch}")
    if update_every < 1:
        raise ConfigError(f"update_every must be >= 1, got {update_every}")
    modulation = streams[0].spec.modulation
    n_rails = 2 if modulation.is_complex else 1
    channels = [LmsChannel(np.zeros(l_ch), mu) for _ in range(n_rails)]
    trace = BerTrace(modulation)
    batch_index = 0
    for seg_num, stream in enumerate(streams, start=1):
        trace.segment_starts[seg_num] = batch_index
        rail_samples = _rail_center_samples(stream)
        rails = _rail_amplitudes(stream.labels, modulation)
        metrics = [None] * n_rails
        lo, hi = interior_bounds(stream.n_seq, cfg.window_half_width)
        n_interior = hi - lo + 1
        n_batches = n_interior // cfg.batch_size
        if n_batches < 1:
            raise UsageError("stream too short for one batch")
        for b in range(n_batches):
            start = lo + b * cfg.batch_size
            stop = start + cfg.batch_size
            rail_decisions = []
            for rail in range(n_rails):
                obs = rail_samples[rail][start:stop]
                dec, m = mlse_detect(obs, channels[rail],
                                     init_metrics=metrics[rail])
                metrics[rail] = m - m.min()
                rail_decisions.append(dec)
            decisions = _combine_rail_decisions(rail_decisions, modulation)
            truth = stream.labels[start:stop].astype(np.int64)
            sym_errors = int((decisions != truth).sum())
            bit_errors = count_bit_errors(truth, decisions, modulation)
            raw = bit_errors / (len(truth) * modulation.bits_per_symbol)
            trace.records.append(BatchRecord(batch_index, seg_num, sym_errors,
                                             len(truth), raw))
            if (b + 1) % update_every == 0:
                for rail, (_, amps) in enumerate(rails):
                    prefix = np.zeros(l_ch - 1)
                    if start >= l_ch - 1:
                        prefix = amps[start - (l_ch - 1):start]
                    amps_ext = np.concatenate([prefix, amps[start:stop]])
                    new_taps = backend.lms_block(
                        amps_ext, rail_samples[rail][start:stop],
                        channels[rail].taps, mu)
                    channels[rail] = LmsChannel(new_taps, mu)
            batch_index += 1
    _attach_smoothed(trace, cfg.smoothing_window)
    return trace


@dataclass
class FinetuneResult:
    trace: BerTrace
    model: Mlp


def supervised_finetune(mlp: Mlp, streams, gamma: float, cfg: OnlineConfig,
                        iterations: int = 100) -> FinetuneResult:
    """Per-segment fine-tuning on a labeled prefix, then frozen equalization.

    At each segment start the model is trained for ``iterations`` full-batch
    cross-entropy steps on the first ``gamma`` fraction of interior symbols;
    the whole segment (training prefix included) is then scored with the
    tuned model.
    """
    if not 0.0 < gamma <= 1.0:
        raise UsageError(f"gamma must be in (0, 1], got {gamma}")
    modulation = streams[0].spec.modulation
    trace = BerTrace(modulation)
    model = mlp
    batch_index = 0
    for seg_num, stream in enumerate(streams, start=1):
        trace.segment_starts[seg_num] = batch_index
        batches = collect_batches(stream, cfg.window_half_width, cfg.batch_size)
        lo, hi = interior_bounds(stream.n_seq, cfg.window_half_width)
        n_train = max(1, int(gamma * (hi - lo + 1)))
        train_rows = feature_rows(stream, cfg.window_half_width)[:n_train]
        train_labels = stream.labels[lo:lo + n_train].astype(np.int64)
        train_batch = Batch(train_rows, np.arange(lo, lo + n_train), train_labels)
        state = optim.make_state(model.arch)
        for _ in range(iterations):
            res = semisup.batch_loss_and_grads(
                model, train_batch, semisup.LossKind.CROSS_ENTROPY,
                semisup.SslConfig(), rng=None)
            model, state = optim.step(state, model, res.grads, cfg.optimizer)
        for batch in batches:
            preds = np.argmax(forward_batch(model, batch.features).probs, axis=1)
            truth = batch.labels.astype(np.int64)
            sym_errors = int((preds != truth).sum())
            bit_errors = count_bit_errors(truth, preds, modulation)
            raw = bit_errors / (len(truth) * modulation.bits_per_symbol)
            trace.records.append(BatchRecord(batch_index, seg_num, sym_errors,
                                             len(truth), raw))
            batch_index += 1
    _attach_smoothed(trace, cfg.smoothing_window)
    return FinetuneResult(trace, model)
