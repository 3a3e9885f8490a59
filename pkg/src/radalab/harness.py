"""Experiment orchestration: run configuration, the training loop,
metrics emission, and binary checkpoints.

A run is a pure function of its config: datasets, weight init, batch
shuffling and mixup draws are fed by four independent RNG streams derived
from the master seed with fixed stream ids, so repeated runs produce
byte-identical metrics and toggling mixup does not perturb shuffling.

Each optimizer step minimizes

    classification_loss + adversarial_loss

where the discriminator input passes through the gradient-reversal op, so
the single step simultaneously trains the discriminator to separate the
domains and the feature extractor to confuse it. When the relabeling
controller is active, well-aligned target samples switch to source labels
for that batch (and optionally get mixed with original source features)
before the adversarial term is assembled.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import SgdMomentum, Tensor, backward
from .datasets import (
    SOURCE, TARGET, Batch, Dataset, concat_datasets, generate_blobs,
    generate_moons, make_batches, read_dataset,
)
from .diagnostics import (
    METRICS_HEADER, MetricsRow, MmdConfig, extract_features,
    format_metrics_row, mean_domain_entropy, mmd, target_accuracy,
)
from .losses import (
    LossConfig, adversarial_loss, classification_loss, object_entropy,
    sample_weights,
)
from .models import ModelBundle, cdan_condition, classify, discriminate, feature_extract
from .rada import (
    RadaConfig, RadaState, controller_step, mixup_features, relabel_batch,
    select_relabels,
)
from .rada import domain_entropy as _domain_entropy

GENERATORS = ("moons", "blobs", "csv")

# fixed stream ids deriving independent RNGs from the master seed
_STREAMS = {"data": 0, "init": 1, "shuffle": 2, "mixup": 3}


class ConfigError(ValueError):
    """Bad run configuration; message names the key (and line, if parsed)."""


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint file."""


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class RunConfig:
    """Flat run configuration; every field has a working default."""

    # dataset: a generator and its parameters, or csv paths
    data_generator: str = "moons"
    data_csv: str = ""                 # comma-separated paths, pooled
    data_n_per_domain: int = 1000
    data_noise: float = 0.1
    data_rotation_deg: float = 45.0
    data_shift_x: float = 2.0
    data_shift_y: float = 0.0
    blobs_num_classes: int = 3
    blobs_n_per_class: int = 200
    blobs_class_radius: float = 4.0
    blobs_scale: float = 1.0
    # model
    feature_widths: tuple = (64, 32)
    classifier_widths: tuple = ()
    discriminator_widths: tuple = (64, 64)
    conditioning_mode: str = "plain"
    condition_detach: bool = True
    # loss
    lambda_adv: float = 1.0
    lambda_ramp: bool = False
    reweight_mode: str = "none"
    clamp_eps: float = 1e-12
    # relabeling controller
    rada_enabled: bool = True
    tau: float = 0.35
    patience_k: int = 5
    epsilon_improve: float = 1e-3
    mixup_enabled: bool = True
    mixup_full_grad: bool = True
    relabel_persistent: bool = False   # experimental; default transient
    # optimization
    learning_rate: float = 1e-3
    discriminator_lr_mult: float = 30.0
    momentum: float = 0.9
    epochs: int = 100
    batch_size: int = 32
    master_seed: int = 0
    output_dir: str = "runs/run"
    checkpoint_every: int = 25
    # diagnostics
    mmd_multipliers: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)
    mmd_max_samples: int = 1000

    def loss_config(self) -> LossConfig:
        return LossConfig(lambda_adv=self.lambda_adv, reweight_mode=self.reweight_mode,
                          clamp_eps=self.clamp_eps)

    def rada_config(self) -> RadaConfig:
        return RadaConfig(tau=self.tau, patience_k=self.patience_k,
                          epsilon_improve=self.epsilon_improve,
                          mixup_enabled=self.mixup_enabled)

    def mmd_config(self) -> MmdConfig:
        return MmdConfig(bandwidth_multipliers=tuple(self.mmd_multipliers),
                         max_samples_per_domain=self.mmd_max_samples)


# ---------------------------------------------------------------------------
# config text format: one `key = value` per line, `#` comments


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _parse_int_tuple(s: str) -> tuple:
    s = s.strip()
    if not s:
        return ()
    return tuple(int(v.strip()) for v in s.split(","))


def _parse_float_tuple(s: str) -> tuple:
    s = s.strip()
    if not s:
        return ()
    return tuple(float(v.strip()) for v in s.split(","))


_TUPLE_INT_KEYS = {"feature_widths", "classifier_widths", "discriminator_widths"}
_TUPLE_FLOAT_KEYS = {"mmd_multipliers"}


def _field_parser(f: dataclasses.Field):
    if f.name in _TUPLE_INT_KEYS:
        return _parse_int_tuple
    if f.name in _TUPLE_FLOAT_KEYS:
        return _parse_float_tuple
    if f.type in ("bool", bool):
        return _parse_bool
    if f.type in ("int", int):
        return int
    if f.type in ("float", float):
        return float
    return str


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _positive(name):
    def check(v):
        if v <= 0:
            raise ValueError(f"{name} must be positive")
    return check


def _nonnegative(name):
    def check(v):
        if v < 0:
            raise ValueError(f"{name} must be >= 0")
    return check


def _one_of(name, options):
    def check(v):
        if v not in options:
            raise ValueError(f"{name} must be one of {options}")
    return check


def _even_min(name, lo):
    def check(v):
        if v < lo or v % 2:
            raise ValueError(f"{name} must be even and >= {lo}")
    return check


def _widths(name):
    def check(v):
        if any(w <= 0 for w in v):
            raise ValueError(f"{name} entries must be positive")
        if name == "feature_widths" and not v:
            raise ValueError("feature_widths must not be empty")
    return check


def _at_least(name, lo):
    def check(v):
        if v < lo:
            raise ValueError(f"{name} must be >= {lo}")
    return check


def _momentum_range(v):
    if not 0.0 <= v < 1.0:
        raise ValueError("momentum must be in [0, 1)")


_VALIDATORS = {
    "data_generator": _one_of("data_generator", GENERATORS),
    "data_n_per_domain": _even_min("data_n_per_domain", 2),
    "data_noise": _nonnegative("data_noise"),
    "blobs_num_classes": _at_least("blobs_num_classes", 2),
    "blobs_n_per_class": _positive("blobs_n_per_class"),
    "blobs_class_radius": _nonnegative("blobs_class_radius"),
    "feature_widths": _widths("feature_widths"),
    "classifier_widths": _widths("classifier_widths"),
    "discriminator_widths": _widths("discriminator_widths"),
    "conditioning_mode": _one_of("conditioning_mode", ("plain", "cdan")),
    "lambda_adv": _nonnegative("lambda_adv"),
    "reweight_mode": _one_of("reweight_mode",
                             ("none", "entropy", "inverse_entropy", "discriminator")),
    "clamp_eps": lambda v: LossConfig(clamp_eps=v),
    "tau": lambda v: RadaConfig(tau=v),
    "patience_k": lambda v: RadaConfig(patience_k=v),
    "epsilon_improve": lambda v: RadaConfig(epsilon_improve=v),
    "learning_rate": _positive("learning_rate"),
    "discriminator_lr_mult": _positive("discriminator_lr_mult"),
    "momentum": _momentum_range,
    "epochs": _positive("epochs"),
    "batch_size": _even_min("batch_size", 4),
    "master_seed": _nonnegative("master_seed"),
    "checkpoint_every": _positive("checkpoint_every"),
    "mmd_multipliers": lambda v: MmdConfig(bandwidth_multipliers=v),
    "mmd_max_samples": _positive("mmd_max_samples"),
}


def set_config_key(cfg: RunConfig, key: str, raw: str) -> None:
    """Type-check, validate and assign one textual key = value pair."""
    if key not in _FIELDS:
        raise ConfigError(f"unknown key {key!r}")
    try:
        value = _field_parser(_FIELDS[key])(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: malformed value {raw.strip()!r} ({exc})")
    try:
        if key in _VALIDATORS:
            _VALIDATORS[key](value)
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: {exc}")
    setattr(cfg, key, value)


def parse_config_text(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, raw_line in enumerate(text.split("\n"), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, raw = line.split("=", 1)
        try:
            set_config_key(cfg, key.strip(), raw)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}")
    return cfg


def parse_config(path) -> RunConfig:
    with open(path, "r") as fh:
        return parse_config_text(fh.read())


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_config(cfg: RunConfig) -> str:
    """Canonical text form; parse(format(cfg)) == cfg."""
    lines = [f"{f.name} = {_format_value(getattr(cfg, f.name))}"
             for f in dataclasses.fields(RunConfig)]
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(format_config(cfg).encode()).hexdigest()


# ---------------------------------------------------------------------------
# builders


def stream_rng(master_seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), _STREAMS[name]]))


def _stream_seed(master_seed: int, name: str) -> int:
    return int(np.random.SeedSequence([int(master_seed), _STREAMS[name]]).generate_state(1)[0])


def build_dataset(cfg: RunConfig) -> Dataset:
    if cfg.data_generator == "moons":
        return generate_moons(cfg.data_n_per_domain, cfg.data_noise,
                              cfg.data_rotation_deg,
                              (cfg.data_shift_x, cfg.data_shift_y),
                              seed=_stream_seed(cfg.master_seed, "data"))
    if cfg.data_generator == "blobs":
        return generate_blobs(cfg.blobs_num_classes, cfg.blobs_n_per_class,
                              cfg.blobs_class_radius, cfg.data_noise,
                              rotation_deg=cfg.data_rotation_deg,
                              scale=cfg.blobs_scale,
                              shift=(cfg.data_shift_x, cfg.data_shift_y),
                              seed=_stream_seed(cfg.master_seed, "data"))
    if not cfg.data_csv:
        raise ConfigError("data_generator = csv requires data_csv paths")
    parts = [read_dataset(p.strip()) for p in cfg.data_csv.split(",")]
    return concat_datasets(parts)


def build_model(cfg: RunConfig, d_in: int, num_classes: int) -> ModelBundle:
    return ModelBundle(d_in, num_classes, stream_rng(cfg.master_seed, "init"),
                       feature_widths=tuple(cfg.feature_widths),
                       classifier_widths=tuple(cfg.classifier_widths),
                       discriminator_widths=tuple(cfg.discriminator_widths),
                       conditioning_mode=cfg.conditioning_mode)


def effective_lambda(cfg: RunConfig, epoch: int) -> float:
    """Adversarial balance for this epoch; optionally ramped from 0 to
    lambda_adv along training progress."""
    if not cfg.lambda_ramp:
        return cfg.lambda_adv
    p = epoch / max(1, cfg.epochs)
    return cfg.lambda_adv * (2.0 / (1.0 + math.exp(-10.0 * p)) - 1.0)


def _build_optimizers(cfg: RunConfig, params: dict) -> list[SgdMomentum]:
    """One optimizer for F/C, one for the discriminator head, which may
    run at a learning-rate multiple (the usual adversarial recipe)."""
    d_params = {k: p for k, p in params.items() if k.startswith("D/")}
    rest = {k: p for k, p in params.items() if k not in d_params}
    return [
        SgdMomentum(rest, lr=cfg.learning_rate, momentum=cfg.momentum),
        SgdMomentum(d_params, lr=cfg.learning_rate * cfg.discriminator_lr_mult,
                    momentum=cfg.momentum),
    ]


def _merged_velocities(opts: list[SgdMomentum]) -> dict[str, np.ndarray]:
    merged: dict[str, np.ndarray] = {}
    for opt in opts:
        merged.update(opt.velocities)
    return merged


# ---------------------------------------------------------------------------
# per-batch loss assembly


@dataclass
class BatchOutcome:
    loss: Tensor
    loss_cls: float
    loss_adv: float
    relabeled: int
    target_slots: int
    degenerate: bool
    decision: object = None


def _discriminator_input(model: ModelBundle, feats: Tensor, detach_probs: bool):
    if model.conditioning_mode == "plain":
        return feats
    log_probs = classify(model, feats)
    probs = ad.exp(log_probs.detach() if detach_probs else log_probs)
    return cdan_condition(feats, probs)


def batch_losses(model: ModelBundle, batch: Batch, loss_cfg: LossConfig,
                 rada_cfg: RadaConfig, lam: float, rada_active: bool,
                 mixup_rng: np.random.Generator | None = None,
                 condition_detach: bool = True,
                 mixup_full_grad: bool = True) -> BatchOutcome:
    """One forward pass: classification term, optional relabeling and
    mixup, adversarial term under the batch's working labels."""
    feats = feature_extract(model, Tensor(batch.features))
    log_probs = classify(model, feats)
    loss_cls = classification_loss(log_probs, batch.class_labels, batch.clf_mask)

    d_in = _discriminator_input(model, feats, condition_detach)
    pred = discriminate(model, ad.grad_reverse(d_in, lam))

    decision = None
    mix = None
    if rada_active:
        tgt_pos = batch.positions_of(TARGET)
        if tgt_pos.size:
            decision = select_relabels(_domain_entropy(pred.p0.data[tgt_pos]),
                                       rada_cfg.tau, positions=tgt_pos)
            relabel_batch(batch, decision)
            if rada_cfg.mixup_enabled and decision.indices.size:
                src_pos = batch.positions_of(SOURCE, working=False)
                src_feats = ad.select_rows(feats, src_pos)
                rel_feats = ad.select_rows(feats, decision.indices)
                if not mixup_full_grad:
                    src_feats, rel_feats = src_feats.detach(), rel_feats.detach()
                mix = mixup_features(src_feats, rel_feats, mixup_rng)

    weights = sample_weights(loss_cfg.reweight_mode, object_entropy(log_probs),
                             pred, batch.domain_working)
    p_all = pred.p_source
    labels_all = batch.domain_working
    if mix is not None and mix.n:
        d_mix = _discriminator_input(model, mix.features, condition_detach)
        pred_mix = discriminate(model, ad.grad_reverse(d_mix, lam))
        p_all = ad.concat_rows([p_all, pred_mix.p_source])
        labels_all = np.concatenate([labels_all, mix.domain_labels])
        weights = np.concatenate([weights, np.ones(mix.n)])  # mixed samples: unit weight

    adv = adversarial_loss(p_all, labels_all, weights, clamp_eps=loss_cfg.clamp_eps)
    return BatchOutcome(
        loss=ad.add(loss_cls, adv.value),
        loss_cls=loss_cls.item(),
        loss_adv=adv.value.item(),
        relabeled=0 if decision is None else int(decision.indices.size),
        target_slots=int(batch.positions_of(TARGET, working=False).size),
        degenerate=adv.target_empty,
        decision=decision,
    )


# ---------------------------------------------------------------------------
# checkpoints (single binary file, little-endian, length-prefixed blobs)

CHECKPOINT_MAGIC = b"RADACKPT"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    config_text: str
    epoch: int
    rada_state: RadaState
    rng_states: dict[str, str]      # stream name -> json-encoded generator state
    blobs: dict[str, np.ndarray]    # "param/..." and "vel/..." float64 arrays
    version: int = CHECKPOINT_VERSION


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint (need {n} bytes at {self.pos})")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", ckpt.version)]
    text = ckpt.config_text.encode()
    parts += [struct.pack("<I", len(text)), text,
              hashlib.sha256(text).digest(),
              struct.pack("<I", ckpt.epoch)]
    st = ckpt.rada_state
    parts.append(struct.pack("<BdI", int(st.active), st.best_entropy, st.plateau_counter))
    parts.append(struct.pack("<I", len(st.entropy_history)))
    parts.append(struct.pack(f"<{len(st.entropy_history)}d", *st.entropy_history))
    parts.append(struct.pack("<B", len(ckpt.rng_states)))
    for name in sorted(ckpt.rng_states):
        blob = ckpt.rng_states[name].encode()
        parts += [struct.pack("<B", len(name)), name.encode(),
                  struct.pack("<I", len(blob)), blob]
    parts.append(struct.pack("<I", len(ckpt.blobs)))
    for name in sorted(ckpt.blobs):
        arr = np.ascontiguousarray(ckpt.blobs[name], dtype=np.float64)
        nb = name.encode()
        parts += [struct.pack("<H", len(nb)), nb, struct.pack("<B", arr.ndim)]
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        cur = _Cursor(fh.read())
    if cur.take(8) != CHECKPOINT_MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (version,) = cur.unpack("I")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (text_len,) = cur.unpack("I")
    text = cur.take(text_len)
    digest = cur.take(32)
    if hashlib.sha256(text).digest() != digest:
        raise CheckpointError("config hash mismatch (corrupted checkpoint)")
    (epoch,) = cur.unpack("I")
    active, best, counter = cur.unpack("BdI")
    (hist_len,) = cur.unpack("I")
    history = list(cur.unpack(f"{hist_len}d"))
    state = RadaState(active=bool(active), best_entropy=best,
                      plateau_counter=counter, entropy_history=history)
    (n_rng,) = cur.unpack("B")
    rng_states = {}
    for _ in range(n_rng):
        (name_len,) = cur.unpack("B")
        name = cur.take(name_len).decode()
        (blob_len,) = cur.unpack("I")
        rng_states[name] = cur.take(blob_len).decode()
    (n_blobs,) = cur.unpack("I")
    blobs = {}
    for _ in range(n_blobs):
        (name_len,) = cur.unpack("H")
        name = cur.take(name_len).decode()
        (ndim,) = cur.unpack("B")
        shape = cur.unpack(f"{ndim}Q")
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(cur.take(count * 8), dtype="<f8").reshape(shape)
        blobs[name] = data.copy()
    if cur.pos != len(cur.buf):
        raise CheckpointError(f"{len(cur.buf) - cur.pos} trailing bytes in checkpoint")
    return Checkpoint(config_text=text.decode(), epoch=epoch, rada_state=state,
                      rng_states=rng_states, blobs=blobs, version=version)


def _rng_state_json(rng: np.random.Generator) -> str:
    return json.dumps(rng.bit_generator.state)


def _set_rng_state(rng: np.random.Generator, state_json: str) -> None:
    rng.bit_generator.state = json.loads(state_json)


# ---------------------------------------------------------------------------
# the training loop


@dataclass
class RunResult:
    config: RunConfig
    rows: list[MetricsRow]
    metrics_path: Path
    checkpoint_path: Path
    degenerate_batches: int = 0


def _resume_compatible(old: RunConfig, new: RunConfig) -> bool:
    """Everything but the horizon and the output location must match."""
    neutral = {"epochs": 0, "output_dir": ""}
    return dataclasses.replace(old, **neutral) == dataclasses.replace(new, **neutral)


def _make_checkpoint(cfg, epoch, state, model, opts, rngs, persistent) -> Checkpoint:
    blobs = {f"param/{k}": p.data.copy() for k, p in model.parameters().items()}
    blobs.update({f"vel/{k}": v.copy() for k, v in _merged_velocities(opts).items()})
    if persistent is not None:
        blobs["persistent_domains"] = persistent.astype(np.float64)
    return Checkpoint(
        config_text=format_config(cfg),
        epoch=epoch,
        rada_state=RadaState(state.active, state.best_entropy, state.plateau_counter,
                             list(state.entropy_history)),
        rng_states={name: _rng_state_json(rng) for name, rng in rngs.items()},
        blobs=blobs,
    )


def load_model_params(model: ModelBundle, ckpt: Checkpoint) -> None:
    for key, p in model.parameters().items():
        blob = ckpt.blobs.get(f"param/{key}")
        if blob is None or blob.shape != p.data.shape:
            raise CheckpointError(f"checkpoint blob param/{key} missing or wrong shape")
        p.data[...] = blob


def _restore_from_checkpoint(ckpt: Checkpoint, cfg, model, opts, rngs):
    old_cfg = parse_config_text(ckpt.config_text)
    if not _resume_compatible(old_cfg, cfg):
        raise ConfigError("resume config differs from checkpoint config "
                          "(only epochs and output_dir may change)")
    load_model_params(model, ckpt)
    for key, v in _merged_velocities(opts).items():
        blob = ckpt.blobs.get(f"vel/{key}")
        if blob is None or blob.shape != v.shape:
            raise CheckpointError(f"checkpoint blob vel/{key} missing or wrong shape")
        v[...] = blob
    for name, rng in rngs.items():
        if name not in ckpt.rng_states:
            raise CheckpointError(f"checkpoint missing rng stream {name!r}")
        _set_rng_state(rng, ckpt.rng_states[name])
    persistent = ckpt.blobs.get("persistent_domains")
    return ckpt.rada_state, persistent


def run_training(cfg: RunConfig, resume_from=None) -> RunResult:
    """Train per the config; writes metrics.csv and checkpoints under
    cfg.output_dir and returns the collected rows."""
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    metrics_path = outdir / "metrics.csv"
    checkpoint_path = outdir / "checkpoint.bin"

    dataset = build_dataset(cfg).require_trainable()
    model = build_model(cfg, dataset.d, dataset.num_classes)
    params = model.parameters()
    param_list = list(params.values())
    opts = _build_optimizers(cfg, params)
    rngs = {"shuffle": stream_rng(cfg.master_seed, "shuffle"),
            "mixup": stream_rng(cfg.master_seed, "mixup")}
    state = RadaState()
    persistent = dataset.domain_labels.copy() if cfg.relabel_persistent else None
    start_epoch = 0

    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        state, persistent_blob = _restore_from_checkpoint(ckpt, cfg, model, opts, rngs)
        if cfg.relabel_persistent:
            if persistent_blob is None:
                raise CheckpointError("checkpoint lacks persistent domain labels")
            persistent = persistent_blob.astype(np.int64)
        start_epoch = ckpt.epoch
        if start_epoch >= cfg.epochs:
            raise ConfigError(f"checkpoint already at epoch {start_epoch}; "
                              f"nothing to resume for epochs = {cfg.epochs}")

    loss_cfg = cfg.loss_config()
    rada_cfg = cfg.rada_config()
    mmd_cfg = cfg.mmd_config()
    src_idx = dataset.indices_of(SOURCE)
    tgt_idx = dataset.indices_of(TARGET)

    rows: list[MetricsRow] = []
    degenerate_total = 0
    with open(metrics_path, "w", newline="") as metrics_fh:
        metrics_fh.write(METRICS_HEADER + "\n")
        for epoch in range(start_epoch, cfg.epochs):
            lam = effective_lambda(cfg, epoch)
            batches = make_batches(dataset, cfg.batch_size, rngs["shuffle"],
                                   working_domains=persistent)
            sum_cls = sum_adv = 0.0
            relabeled = target_slots = 0
            active = cfg.rada_enabled and state.active
            for b_i, batch in enumerate(batches):
                outcome = batch_losses(
                    model, batch, loss_cfg, rada_cfg, lam, active,
                    mixup_rng=rngs["mixup"],
                    condition_detach=cfg.condition_detach,
                    mixup_full_grad=cfg.mixup_full_grad)
                if not np.isfinite(outcome.loss.item()):
                    raise TrainingDiverged(epoch + 1, b_i)
                backward(outcome.loss, params=param_list)
                for opt in opts:
                    opt.step()
                sum_cls += outcome.loss_cls
                sum_adv += outcome.loss_adv
                relabeled += outcome.relabeled
                target_slots += outcome.target_slots
                degenerate_total += int(outcome.degenerate)
                if persistent is not None and outcome.decision is not None \
                        and outcome.decision.indices.size:
                    persistent[batch.dataset_indices[outcome.decision.indices]] = SOURCE

            feats = extract_features(model, dataset.features)
            row = MetricsRow(
                epoch=epoch + 1,
                loss_cls=sum_cls / len(batches),
                loss_adv=sum_adv / len(batches),
                mean_domain_entropy=mean_domain_entropy(model, dataset),
                mmd=mmd(feats[src_idx], feats[tgt_idx], mmd_cfg),
                target_accuracy=target_accuracy(model, dataset),
                relabel_fraction=relabeled / target_slots if target_slots else 0.0,
                rada_active=active,
            )
            rows.append(row)
            metrics_fh.write(format_metrics_row(row) + "\n")
            if cfg.rada_enabled:
                state = controller_step(row.mean_domain_entropy, state, rada_cfg)
            if (epoch + 1) % cfg.checkpoint_every == 0 and (epoch + 1) != cfg.epochs:
                save_checkpoint(outdir / f"checkpoint_ep{epoch + 1:04d}.bin",
                                _make_checkpoint(cfg, epoch + 1, state, model, opts,
                                                 rngs, persistent))
        save_checkpoint(checkpoint_path,
                        _make_checkpoint(cfg, cfg.epochs, state, model, opts,
                                         rngs, persistent))
    return RunResult(config=cfg, rows=rows, metrics_path=metrics_path,
                     checkpoint_path=checkpoint_path,
                     degenerate_batches=degenerate_total)
