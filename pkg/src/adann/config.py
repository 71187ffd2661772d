"""Run configuration: JSON schema, validation, canonical hashing.

One JSON document describes a full experiment (channel pair, architecture,
offline and online training, baselines).  ``parse_config`` validates field
by field and reports the dotted path of anything missing or malformed;
``normalize`` echoes the effective config (defaults filled in) whose
canonical form is hashed into every manifest.
"""

import hashlib
import json

from .chansim import ChannelSpec, Modulation
from .errors import ConfigError
from .nn import Architecture
from .optim import OptimizerConfig, OptimizerKind
from .pipeline import OfflineConfig, OnlineConfig
from .semisup import LossKind, SslConfig


_MISSING = object()


def _get(doc, key, path, kind=None, default=_MISSING):
    dotted = f"{path}.{key}" if path else key
    if key not in doc:
        if default is not _MISSING:
            return default
        raise ConfigError(f"missing required field '{dotted}'")
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        names = kind if isinstance(kind, tuple) else (kind,)
        expected = "/".join(k.__name__ for k in names)
        raise ConfigError(
            f"field '{dotted}' must be {expected}, got {type(value).__name__}")
    return value


def _channel_spec(doc, path, modulation, gamma, seed) -> ChannelSpec:
    taps = _get(doc, "isi_taps", path, list)
    nl = _get(doc, "nl_coeffs", path, list)
    noise = _get(doc, "noise_std", path, (int, float))
    try:
        return ChannelSpec(modulation, tuple(taps), tuple(nl), float(noise),
                           gamma=gamma, seed=seed)
    except ConfigError as exc:
        raise ConfigError(f"in '{path}': {exc}") from exc


def _optimizer(doc, path) -> OptimizerConfig:
    kind_name = _get(doc, "kind", path, str)
    try:
        kind = OptimizerKind(kind_name)
    except ValueError:
        valid = ", ".join(k.value for k in OptimizerKind)
        raise ConfigError(
            f"field '{path}.kind' must be one of [{valid}], got {kind_name!r}")
    try:
        return OptimizerConfig(
            kind,
            learning_rate=float(_get(doc, "learning_rate", path, (int, float))),
            beta=float(_get(doc, "beta", path, (int, float), default=0.9)),
            beta1=float(_get(doc, "beta1", path, (int, float), default=0.9)),
            beta2=float(_get(doc, "beta2", path, (int, float), default=0.999)),
            eps=float(_get(doc, "eps", path, (int, float), default=1e-8)),
        )
    except ConfigError as exc:
        raise ConfigError(f"in '{path}': {exc}") from exc


class RunConfig:
    """Validated experiment description."""

    def __init__(self, doc: dict):
        self.seed = int(_get(doc, "seed", "", int))
        mod_name = _get(doc, "modulation", "", str)
        try:
            self.modulation = Modulation(mod_name)
        except ValueError:
            raise ConfigError(
                f"field 'modulation' must be 'pam4' or 'qam16', got {mod_name!r}")
        self.gamma = int(_get(doc, "samples_per_symbol", "", int, default=4))
        self.window_half_width = int(_get(doc, "window_half_width", "", int))
        if self.window_half_width < 0:
            raise ConfigError("field 'window_half_width' must be >= 0")

        arch_doc = _get(doc, "arch", "", dict)
        input_dim = self.gamma * (2 * self.window_half_width + 1)
        self.arch = Architecture(
            input_dim=input_dim,
            hidden_width=int(_get(arch_doc, "hidden_width", "arch", int)),
            num_layers=int(_get(arch_doc, "num_layers", "arch", int)),
            num_classes=self.modulation.n_classes)

        chan = _get(doc, "channel", "", dict)
        self.n_symbols = int(_get(chan, "n_symbols", "channel", int))
        if self.n_symbols < 1:
            raise ConfigError("field 'channel.n_symbols' must be positive")
        self.spec1 = _channel_spec(_get(chan, "set1", "channel", dict),
                                   "channel.set1", self.modulation, self.gamma,
                                   self.seed)
        self.spec2 = _channel_spec(_get(chan, "set2", "channel", dict),
                                   "channel.set2", self.modulation, self.gamma,
                                   self.seed)

        off = _get(doc, "offline", "", dict)
        self.offline_fraction = float(_get(off, "fraction", "offline", (int, float)))
        self.offline = OfflineConfig(
            epochs=int(_get(off, "epochs", "offline", int)),
            batch_size=int(_get(off, "batch_size", "offline", int)),
            optimizer=_optimizer(_get(off, "optimizer", "offline", dict),
                                 "offline.optimizer"),
            seed=self.seed)

        on = _get(doc, "online", "", dict)
        loss_name = _get(on, "loss", "online", str)
        try:
            loss_kind = LossKind(loss_name)
        except ValueError:
            valid = ", ".join(k.value for k in LossKind)
            raise ConfigError(
                f"field 'online.loss' must be one of [{valid}], got {loss_name!r}")
        try:
            ssl = SslConfig(
                sigma=float(_get(on, "sigma", "online", (int, float), default=0.0)),
                epsilon=float(_get(on, "epsilon", "online", (int, float), default=0.0)),
                xi=float(_get(on, "xi", "online", (int, float), default=0.1)))
        except ConfigError as exc:
            raise ConfigError(f"in 'online': {exc}") from exc
        self.online = OnlineConfig(
            window_half_width=self.window_half_width,
            batch_size=int(_get(on, "batch_size", "online", int)),
            loss_kind=loss_kind,
            ssl=ssl,
            optimizer=_optimizer(_get(on, "optimizer", "online", dict),
                                 "online.optimizer"),
            smoothing_window=int(_get(on, "smoothing_window", "online", int, default=8)),
            ber_threshold=float(_get(on, "ber_threshold", "online", (int, float),
                                     default=1e-3)),
            adapt=bool(_get(on, "adapt", "online", bool, default=True)),
            seed=self.seed)

        base = _get(doc, "baselines", "", dict, default={})
        self.mlse_memory_lengths = [
            int(v) for v in _get(base, "mlse_memory_lengths", "baselines", list,
                                 default=[1, 3, 5, 7])]
        self.lms_step = float(_get(base, "lms_step", "baselines", (int, float),
                                   default=0.01))
        self.finetune_gammas = [
            float(v) for v in _get(base, "finetune_gammas", "baselines", list,
                                   default=[1 / 128, 1 / 32, 1 / 8])]
        self.finetune_iterations = int(_get(base, "finetune_iterations",
                                            "baselines", int, default=100))
        self.batch_size_sweep = [
            int(v) for v in _get(base, "batch_size_sweep", "baselines", list,
                                 default=[])]

    def normalized(self) -> dict:
        """Effective config with all defaults filled in."""
        def opt_doc(o: OptimizerConfig):
            return {"kind": o.kind.value, "learning_rate": o.learning_rate,
                    "beta": o.beta, "beta1": o.beta1, "beta2": o.beta2,
                    "eps": o.eps}

        def chan_doc(s: ChannelSpec):
            return {"isi_taps": list(s.isi_taps), "nl_coeffs": list(s.nl_coeffs),
                    "noise_std": s.noise_std}

        return {
            "seed": self.seed,
            "modulation": self.modulation.value,
            "samples_per_symbol": self.gamma,
            "window_half_width": self.window_half_width,
            "arch": {"hidden_width": self.arch.hidden_width,
                     "num_layers": self.arch.num_layers},
            "channel": {"n_symbols": self.n_symbols,
                        "set1": chan_doc(self.spec1),
                        "set2": chan_doc(self.spec2)},
            "offline": {"fraction": self.offline_fraction,
                        "epochs": self.offline.epochs,
                        "batch_size": self.offline.batch_size,
                        "optimizer": opt_doc(self.offline.optimizer)},
            "online": {"batch_size": self.online.batch_size,
                       "loss": self.online.loss_kind.value,
                       "sigma": self.online.ssl.sigma,
                       "epsilon": self.online.ssl.epsilon,
                       "xi": self.online.ssl.xi,
                       "optimizer": opt_doc(self.online.optimizer),
                       "smoothing_window": self.online.smoothing_window,
                       "ber_threshold": self.online.ber_threshold,
                       "adapt": self.online.adapt},
            "baselines": {"mlse_memory_lengths": self.mlse_memory_lengths,
                          "lms_step": self.lms_step,
                          "finetune_gammas": self.finetune_gammas,
                          "finetune_iterations": self.finetune_iterations,
                          "batch_size_sweep": self.batch_size_sweep},
        }


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def config_hash(doc) -> str:
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


def parse_config(doc: dict, seed_override=None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    if seed_override is not None:
        doc = dict(doc)
        doc["seed"] = int(seed_override)
    return RunConfig(doc)


def load_config(path, seed_override=None) -> RunConfig:
    try:
        text = open(path).read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return parse_config(doc, seed_override)


def default_config() -> dict:
    """Desk-scale PAM4 drift scenario with calibrated defaults."""
    return {
        "seed": 0,
        "modulation": "pam4",
        "samples_per_symbol": 4,
        "window_half_width": 5,
        "arch": {"hidden_width": 10, "num_layers": 6},
        "channel": {
            "n_symbols": 131072,
            "set1": {"isi_taps": [1.0, 0.25, -0.12],
                     "nl_coeffs": [1.0, 0.0, -0.04],
                     "noise_std": 0.35},
            "set2": {"isi_taps": [1.0, 0.38, -0.22],
                     "nl_coeffs": [1.0, 0.0, -0.08],
                     "noise_std": 0.35},
        },
        "offline": {
            "fraction": 0.25,
            "epochs": 200,
            "batch_size": 4096,
            "optimizer": {"kind": "momentum", "learning_rate": 0.004,
                          "beta": 0.9},
        },
        "online": {
            "batch_size": 2048,
            "loss": "aug_vat",
            "sigma": 0.15,
            "epsilon": 0.3,
            "xi": 0.1,
            "optimizer": {"kind": "adam", "learning_rate": 0.01,
                          "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
            "smoothing_window": 8,
            "ber_threshold": 1e-3,
            "adapt": True,
        },
        "baselines": {
            "mlse_memory_lengths": [1, 3, 5, 7],
            "lms_step": 0.01,
            "finetune_gammas": [1 / 128, 1 / 32, 1 / 8],
            "finetune_iterations": 100,
            "batch_size_sweep": [128, 2048, 8192],
        },
    }
