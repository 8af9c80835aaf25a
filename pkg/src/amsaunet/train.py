"""Loss, Adam optimizer, LR schedule, checkpointing glue, and the train loop.

The loss is mean absolute error plus a weighted mean absolute error between
FFT magnitudes, applied per pyramid scale and averaged over the three
scales. Everything is a pure function of (seed, config, data): per-epoch
shuffle and crop randomness derive from (seed, epoch), so an interrupted run
resumed from an epoch-boundary checkpoint reproduces the uninterrupted
trajectory bitwise.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from amsaunet import data as D
from amsaunet import tensor as T
from amsaunet.checkpoint import load_checkpoint, save_checkpoint
from amsaunet.errors import CheckpointError, ContractError, TrainingError
from amsaunet.metrics import psnr
from amsaunet.model import AMSAUNet, ModelConfig


@dataclass
class TrainConfig:
    epochs: int = 10
    lr0: float = 1e-4
    decay_factor: float = 0.5
    decay_every: int = 500
    batch: int = 4
    crop: int = 64
    loss_freq_weight: float = 0.1
    seed: int = 0
    val_fraction: float = 0.1
    checkpoint_every: int = 0  # epochs; 0 = final checkpoint only

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ContractError(f"lr0 must be positive, got {self.lr0}")
        if not 0 < self.decay_factor <= 1:
            raise ContractError(
                f"decay_factor must be in (0, 1], got {self.decay_factor}")
        if self.decay_every < 1:
            raise ContractError(f"decay_every must be >= 1, got {self.decay_every}")
        if self.crop < 4 or (self.crop & (self.crop - 1)):
            raise ContractError(
                f"crop must be a power of two (full-plane FFT in the loss), "
                f"got {self.crop}")


def lr_at(epoch, cfg):
    """Stepped decay: lr0 * decay_factor ** floor(epoch / decay_every)."""
    if epoch < 0:
        raise ContractError(f"epoch must be >= 0, got {epoch}")
    return cfg.lr0 * cfg.decay_factor ** (epoch // cfg.decay_every)


def _l1(a, b):
    return T.mean_all(T.abs_val(T.sub(a, b)))


def _spectral_l1(a, b):
    h = a.shape[2]
    ar, ai = T.fft2_patches(a, h)
    br, bi = T.fft2_patches(b, h)
    return T.mean_all(T.abs_val(T.sub(T.complex_abs(ar, ai), T.complex_abs(br, bi))))


def multiscale_loss(outputs, sharp_pyramid, freq_weight):
    """Per-scale L1 plus weighted FFT-magnitude L1, averaged over scales."""
    total = None
    for out, target in zip(outputs.restored, sharp_pyramid):
        if out.shape != target.shape:
            raise ContractError(
                f"loss: output {out.shape} does not match target {target.shape}")
        term = _l1(out, target)
        if freq_weight != 0.0:
            term = T.add(term, T.scalar_mul(_spectral_l1(out, target), freq_weight))
        total = term if total is None else T.add(total, term)
    return T.scalar_mul(total, 1.0 / len(outputs.restored))


class Adam:
    """Standard Adam with bias correction; state keyed by parameter path."""

    def __init__(self, store, beta1=0.9, beta2=0.999, eps=1e-8):
        self.store = store
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {path: np.zeros(t.shape) for path, t in store.items()}
        self.v = {path: np.zeros(t.shape) for path, t in store.items()}

    def step(self, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for path, p in self.store.items():
            g = p.grad
            if g is None:
                g = np.zeros(p.shape)
            elif not np.isfinite(g).all():
                raise TrainingError(f"non-finite gradient for parameter {path}")
            m = self.m[path]
            v = self.v[path]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self):
        out = {"opt.t": np.array([float(self.t)])}
        for path in self.m:
            out[f"opt.m.{path}"] = self.m[path]
            out[f"opt.v.{path}"] = self.v[path]
        return out

    def load_state(self, arrays):
        self.t = int(arrays["opt.t"][0])
        for path in self.m:
            self.m[path] = np.ascontiguousarray(arrays[f"opt.m.{path}"])
            self.v[path] = np.ascontiguousarray(arrays[f"opt.v.{path}"])


# ---------------------------------------------------------------------------
# Checkpoint contents: config + parameters + optimizer state
# ---------------------------------------------------------------------------

_CONFIG_KEYS = ("levels", "base_channels", "blocks_per_level", "patch",
                "symmetric_mode", "use_aff", "seed")


def checkpoint_arrays(model, optimizer=None):
    arrays = {}
    for key in _CONFIG_KEYS:
        arrays[f"config.{key}"] = np.array([float(getattr(model.config, key))])
    for path, t in model.params.items():
        arrays[f"param.{path}"] = t.data
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    return arrays


def config_from_arrays(arrays):
    try:
        vals = {key: arrays[f"config.{key}"][0] for key in _CONFIG_KEYS}
    except KeyError as exc:
        raise CheckpointError(f"checkpoint is missing config entry {exc}") from exc
    return ModelConfig(
        levels=int(vals["levels"]),
        base_channels=int(vals["base_channels"]),
        blocks_per_level=int(vals["blocks_per_level"]),
        patch=int(vals["patch"]),
        symmetric_mode=bool(vals["symmetric_mode"]),
        use_aff=bool(vals["use_aff"]),
        seed=int(vals["seed"]),
    )


def save_model(path, model, optimizer, epoch, step):
    save_checkpoint(path, epoch, step, checkpoint_arrays(model, optimizer))


def load_model(path):
    """Rebuild a model (and counters + raw arrays) from a checkpoint file."""
    epoch, step, arrays = load_checkpoint(path)
    config = config_from_arrays(arrays)
    model = AMSAUNet(config)
    try:
        model.params.load_arrays(
            {p: arrays[f"param.{p}"] for p in model.params.names()})
    except KeyError as exc:
        raise CheckpointError(f"checkpoint is missing parameter {exc}") from exc
    return model, epoch, step, arrays


# ---------------------------------------------------------------------------
# Inference on whole images (reflect-pad to the required multiple)
# ---------------------------------------------------------------------------

def restore_image(model, buf):
    """Run the network on one image buffer; output dims equal input dims."""
    multiple = 4 * model.config.patch
    t = D.to_tensor(buf.to_rgb())
    _, _, h, w = t.shape
    ph = (multiple - h % multiple) % multiple
    pw = (multiple - w % multiple) % multiple
    arr = t.data
    if ph or pw:
        arr = np.pad(arr, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="reflect")
    out = model.forward(T.Tensor(arr)).restored[0]
    restored = out.data[:, :, :h, :w]
    result = D.from_tensor(T.Tensor(np.ascontiguousarray(restored)))
    if buf.channels == 1:
        # collapse replicated channels back to grayscale
        mean = restored[0].mean(axis=0)
        result = D.ImageBuffer(
            D.round_half_away(np.clip(mean, 0.0, 1.0) * 255.0).astype(np.uint8))
    return result


# ---------------------------------------------------------------------------
# Train loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    checkpoint_path: str
    csv_path: str
    epochs_run: int
    steps_run: int
    step_losses: list
    final_val_psnr: float


def split_train_val(names, val_fraction):
    """Deterministic hold-out: the tail of the sorted name list."""
    if val_fraction <= 0 or len(names) < 2:
        return list(names), []
    k = max(1, int(round(val_fraction * len(names))))
    k = min(k, len(names) - 1)
    return names[:-k], names[-k:]


def _validate(model, dataset, val_names):
    if not val_names:
        return math.nan
    scores = []
    for name in val_names:
        blur, sharp = dataset.load_pair(name)
        scores.append(psnr(restore_image(model, blur), sharp))
    return sum(scores) / len(scores)


def _format_row(epoch, loss, lr, val):
    return f"{epoch},{loss!r},{lr!r},{val!r}\n"


def train_loop(model_cfg, train_cfg, dir_blur, dir_sharp, out_dir,
               resume_from=None, log=print):
    """Train, logging one CSV row per epoch; returns a TrainResult.

    A non-finite loss aborts with the last written checkpoint intact.
    """
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "metrics.csv")
    ckpt_path = os.path.join(out_dir, "checkpoint.bin")

    dataset = D.PairDataset(dir_blur, dir_sharp)
    train_names, val_names = split_train_val(dataset.names, train_cfg.val_fraction)
    train_set = dataset.subset(train_names)

    if resume_from is not None:
        model, start_epoch, step, arrays = load_model(resume_from)
        optimizer = Adam(model.params)
        optimizer.load_state(arrays)
        csv_mode = "a"
    else:
        model = AMSAUNet(model_cfg)
        optimizer = Adam(model.params)
        start_epoch, step = 0, 0
        csv_mode = "w"

    step_losses = []
    val = math.nan
    with open(csv_path, csv_mode) as csv:
        if csv_mode == "w":
            csv.write("epoch,loss,lr,val_psnr\n")
        for epoch in range(start_epoch, train_cfg.epochs):
            lr = lr_at(epoch, train_cfg)
            epoch_losses = []
            for blur, sharp in train_set.iter_epoch(
                    train_cfg.seed, epoch, train_cfg.batch, train_cfg.crop):
                model.params.zero_grads()
                with T.record() as tape:
                    outputs = model.forward(blur)
                    targets = D.build_pyramid(sharp)
                    loss = multiscale_loss(outputs, targets,
                                           train_cfg.loss_freq_weight)
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingError(
                        f"non-finite loss at epoch {epoch} step {step}; "
                        "last good checkpoint retained")
                tape.backward(loss)
                optimizer.step(lr)
                step += 1
                epoch_losses.append(value)
                step_losses.append(value)
            mean_loss = (sum(epoch_losses) / len(epoch_losses)
                         if epoch_losses else math.nan)
            val = _validate(model, dataset, val_names)
            csv.write(_format_row(epoch, mean_loss, lr, val))
            csv.flush()
            log(f"epoch {epoch}: loss={mean_loss:.6g} lr={lr:g} val_psnr={val:.4g}")
            last_epoch = epoch == train_cfg.epochs - 1
            if last_epoch or (train_cfg.checkpoint_every
                              and (epoch + 1) % train_cfg.checkpoint_every == 0):
                save_model(ckpt_path, model, optimizer, epoch + 1, step)
    return TrainResult(ckpt_path, csv_path, train_cfg.epochs - start_epoch,
                       step, step_losses, val)
