"""Depth-1 trainable CF network.

    exemplar -> conv+ReLU -> window -> CF solve -> crop -.
                                                         score -> valid crop -> logistic loss
    search   -> conv+ReLU -----------------------------'

Everything here is plain numpy with hand-written backward maps. The
constant-alpha variant replaces the CF solve by a learned dual signal, and
the desired response y can optionally be learned as well.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from . import cf, spectral
from .errors import CheckpointError, DivergedLoss, ShapeMismatch, StaleCache

CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------- features


@dataclass
class FeatureNetParams:
    kernels: np.ndarray  # (k_out, k_in, r, r)
    biases: np.ndarray  # (k_out,)
    stride: int = 1

    def __post_init__(self):
        self.kernels = np.asarray(self.kernels, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.kernels.ndim != 4 or self.kernels.shape[2] != self.kernels.shape[3]:
            raise ShapeMismatch(f"kernels must be (k_out, k_in, r, r), got {self.kernels.shape}")
        if self.kernels.shape[2] % 2 != 1:
            raise ShapeMismatch("kernel side must be odd")
        if self.biases.shape != (self.kernels.shape[0],):
            raise ShapeMismatch("one bias per output channel")
        if self.stride < 1:
            raise ValueError("stride must be positive")

    @property
    def k_out(self):
        return self.kernels.shape[0]

    @property
    def k_in(self):
        return self.kernels.shape[1]

    @property
    def r(self):
        return self.kernels.shape[2]

    def out_side(self, side):
        return (side - self.r) // self.stride + 1

    def in_side(self, out_side):
        """Smallest input side giving ``out_side`` features."""
        return (out_side - 1) * self.stride + self.r

    @classmethod
    def xavier(cls, rng, k_out=32, k_in=1, r=5, stride=1):
        fan_in = k_in * r * r
        fan_out = k_out * r * r
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return cls(kernels=rng.uniform(-bound, bound, (k_out, k_in, r, r)),
                   biases=np.zeros(k_out), stride=stride)


@dataclass
class ConvCache:
    image: np.ndarray
    windows: np.ndarray
    pre: np.ndarray
    params: FeatureNetParams


def _as_image(img, k_in):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[np.newaxis]
    if img.ndim != 3 or img.shape[0] != k_in:
        raise ShapeMismatch(f"image must have {k_in} channel(s), got shape {img.shape}")
    return img


def conv_forward(img, params):
    """Valid-region correlation with each kernel, plus bias, then ReLU."""
    img = _as_image(img, params.k_in)
    r, s = params.r, params.stride
    if min(img.shape[1:]) < r:
        raise ShapeMismatch(f"image side {img.shape[1:]} smaller than kernel side {r}")
    windows = sliding_window_view(img, (r, r), axis=(1, 2))[:, ::s, ::s]
    pre = np.einsum("chwab,ocab->ohw", windows, params.kernels, optimize=True)
    pre += params.biases[:, None, None]
    return np.maximum(pre, 0.0), ConvCache(img, windows, pre, params)


def conv_backward(cache, grad):
    """Returns (grad_image, grad_kernels, grad_biases); ReLU'(0) is taken as 0."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != cache.pre.shape:
        raise ShapeMismatch(f"gradient {grad.shape} does not match conv output {cache.pre.shape}")
    g = np.where(cache.pre > 0.0, grad, 0.0)
    params = cache.params
    grad_b = g.sum(axis=(1, 2))
    grad_k = np.einsum("ohw,chwab->ocab", g, cache.windows, optimize=True)
    back = np.einsum("ohw,ocab->chwab", g, params.kernels, optimize=True)
    grad_img = np.zeros_like(cache.image)
    s = params.stride
    ho, wo = g.shape[1:]
    for a in range(params.r):
        for b in range(params.r):
            grad_img[:, a:a + s * (ho - 1) + 1:s, b:b + s * (wo - 1) + 1:s] += back[..., a, b]
    return grad_img, grad_k, grad_b


# ---------------------------------------------------------------- loss


@dataclass
class LabelMap:
    labels: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.labels.shape != self.weights.shape:
            raise ShapeMismatch("labels and weights differ in shape")
        if not (np.any(self.labels > 0) and np.any(self.labels < 0)):
            raise ValueError("label map needs at least one positive and one negative")


def make_label_map(side, center, radius):
    """Positive disc of ``radius`` around ``center`` (row, col); balanced weights.

    Each class receives total weight 1/2, spread uniformly within the class.
    """
    rows, cols = np.mgrid[0:side, 0:side]
    dist = np.hypot(rows - center[0], cols - center[1])
    pos = dist <= radius
    labels = np.where(pos, 1.0, -1.0)
    n_pos = pos.sum()
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"label disc at {center} radius {radius} leaves a class empty")
    weights = np.where(pos, 0.5 / n_pos, 0.5 / n_neg)
    return LabelMap(labels, weights)


def logistic_loss(response, labels):
    response = np.asarray(response, dtype=np.float64)
    if response.shape != labels.labels.shape:
        raise ShapeMismatch(f"response {response.shape} vs labels {labels.labels.shape}")
    margin = labels.labels * response
    loss = float(np.sum(labels.weights * np.logaddexp(0.0, -margin)))
    grad = -labels.weights * labels.labels * expit(-margin)
    return loss, grad


# ---------------------------------------------------------------- pipeline


@dataclass
class TrainPair:
    exemplar: np.ndarray
    search: np.ndarray
    labels: LabelMap

    def __post_init__(self):
        if self.search.shape[-1] < self.exemplar.shape[-1]:
            raise ShapeMismatch("search image must be at least as large as the exemplar")


@dataclass
class CFNet:
    """Everything needed to run the network: features, CF layer, score head."""

    params: FeatureNetParams
    cal: cf.ScoreCalibration
    cfg: cf.CFConfig
    search_feature_side: int
    alpha: np.ndarray = None  # set for the constant-alpha variant
    learn_y: bool = False

    @property
    def m(self):
        return self.cfg.m

    @property
    def exemplar_side(self):
        return self.params.in_side(self.cfg.m)

    @property
    def search_side(self):
        return self.params.in_side(self.search_feature_side)

    @property
    def valid_side(self):
        """Side of the response region free of circular wrap-around."""
        return self.search_feature_side - self.cfg.template_side + 1

    @property
    def constant_alpha(self):
        return self.alpha is not None

    def copy(self):
        return CFNet(
            params=FeatureNetParams(self.params.kernels.copy(), self.params.biases.copy(),
                                    self.params.stride),
            cal=cf.ScoreCalibration(self.cal.s, self.cal.b),
            cfg=self.cfg,
            search_feature_side=self.search_feature_side,
            alpha=None if self.alpha is None else self.alpha.copy(),
            learn_y=self.learn_y,
        )


def build_model(seed, m=16, k_out=32, kernel_size=5, stride=1, lam=0.01,
                search_factor=2, constant_alpha=False, learn_y=False):
    """Fresh model with Xavier-uniform kernels, s = 1e-3, b = 0.

    The search image is ``search_factor`` times the exemplar image side.
    """
    rng = np.random.default_rng(seed)
    params = FeatureNetParams.xavier(rng, k_out=k_out, r=kernel_size, stride=stride)
    cfg = cf.CFConfig.default(m, lam=lam)
    search_side = search_factor * params.in_side(m)
    alpha = None
    if constant_alpha:
        alpha = cfg.response / cfg.response.sum()
    return CFNet(params=params, cal=cf.ScoreCalibration(), cfg=cfg,
                 search_feature_side=params.out_side(search_side), alpha=alpha, learn_y=learn_y)


def init_constant_alpha(model, dataset):
    """Set alpha to the mean CF dual solution over the dataset's exemplars.

    Starting from an actual solution keeps the template on the same scale as
    the adaptive variant; a hand-picked alpha can be off by orders of magnitude.
    """
    cfg = model.cfg
    total = np.zeros((cfg.m, cfg.m))
    for pair in dataset:
        fx, _ = conv_forward(pair.exemplar, model.params)
        _, cache = cf.cf_forward(cf.apply_window(fx, cfg.window), cfg)
        total += np.fft.ifft2(cache.alphahat).real
    out = model.copy()
    out.alpha = total / len(dataset)
    return out


def fixed_alpha_template(x, alpha):
    """w_p = alpha * x_p with a given dual signal (no per-exemplar solve)."""
    return np.fft.ifft2(np.conj(spectral.dft2(alpha)) * spectral.dft2(x), axes=(-2, -1)).real


def fixed_alpha_backward(x, alpha, grad_w):
    """Returns (grad_x, grad_alpha) for ``fixed_alpha_template``."""
    xhat = spectral.dft2(x)
    ghat = spectral.dft2(grad_w)
    ahat = spectral.dft2(alpha)
    grad_alpha = np.fft.ifft2(np.sum(xhat * np.conj(ghat), axis=0)).real
    grad_x = np.fft.ifft2(ahat * ghat, axes=(-2, -1)).real
    return grad_x, grad_alpha


def compute_template(model, exemplar):
    """Exemplar image -> cropped template, the forward half used by the tracker."""
    fx, _ = conv_forward(exemplar, model.params)
    xw = cf.apply_window(fx, model.cfg.window)
    if model.constant_alpha:
        w = fixed_alpha_template(xw, model.alpha)
    else:
        w, _ = cf.cf_forward(xw, model.cfg)
    return cf.crop_template(w, model.cfg.crop_margin)


def search_features(model, search):
    fz, _ = conv_forward(search, model.params)
    return fz


def valid_response(model, template, fz):
    """Calibrated score restricted to the wrap-free region; zero shift is at the center."""
    v = fz.shape[-1] - template.shape[-1] + 1
    return cf.score(template, fz, model.cal)[:v, :v]


@dataclass
class ForwardCache:
    model: CFNet
    conv_x: ConvCache
    conv_z: ConvCache
    xw: np.ndarray
    cf_cache: cf.CFCache
    template: np.ndarray
    fz: np.ndarray
    grad_response: np.ndarray
    response_side: int


@dataclass
class Gradients:
    kernels: np.ndarray
    biases: np.ndarray
    s: float
    b: float
    y: np.ndarray = None
    alpha: np.ndarray = None


def forward_loss(pair, model):
    """Loss of one training pair and the caches the backward pass needs."""
    params, cfg = model.params, model.cfg
    fx, conv_x = conv_forward(pair.exemplar, params)
    if fx.shape[-1] != cfg.m:
        raise ShapeMismatch(f"exemplar gives {fx.shape[-1]} features, model expects {cfg.m}")
    xw = cf.apply_window(fx, cfg.window)
    cf_cache = None
    if model.constant_alpha:
        w = fixed_alpha_template(xw, model.alpha)
    else:
        w, cf_cache = cf.cf_forward(xw, cfg)
    template = cf.crop_template(w, cfg.crop_margin)
    fz, conv_z = conv_forward(pair.search, params)
    response = cf.score(template, fz, model.cal)
    v = fz.shape[-1] - template.shape[-1] + 1
    loss, grad_valid = logistic_loss(response[:v, :v], pair.labels)
    grad_response = np.zeros_like(response)
    grad_response[:v, :v] = grad_valid
    return loss, ForwardCache(model, conv_x, conv_z, xw, cf_cache, template, fz,
                              grad_response, v)


def backward_loss(cache, grad_loss=1.0):
    """Chain rule through the whole pipeline for one pair."""
    model = cache.model
    cfg = model.cfg
    g = grad_loss * cache.grad_response
    grad_t, grad_fz, grad_s, grad_b = cf.score_backward(g, cache.template, cache.fz, model.cal)
    grad_w = cf.crop_backward(grad_t, cfg.m, cfg.crop_margin)
    grad_y = grad_alpha = None
    if model.constant_alpha:
        grad_xw, grad_alpha = fixed_alpha_backward(cache.xw, model.alpha, grad_w)
    else:
        if cache.cf_cache is None or cache.cf_cache.m != cfg.m:
            raise StaleCache("forward cache does not match the model")
        grads = cf.cf_backward(cache.cf_cache, cfg, grad_w)
        grad_xw = grads.grad_x
        if model.learn_y:
            grad_y = grads.grad_y
    grad_fx = cf.apply_window(grad_xw, cfg.window)
    _, gk_x, gb_x = conv_backward(cache.conv_x, grad_fx)
    _, gk_z, gb_z = conv_backward(cache.conv_z, grad_fz)
    return Gradients(kernels=gk_x + gk_z, biases=gb_x + gb_z, s=grad_s, b=grad_b,
                     y=grad_y, alpha=grad_alpha)


def apply_update(model, grads, lr):
    model.params.kernels -= lr * grads.kernels
    model.params.biases -= lr * grads.biases
    model.cal.s -= lr * grads.s
    model.cal.b -= lr * grads.b
    if grads.alpha is not None:
        model.alpha = model.alpha - lr * grads.alpha
    if grads.y is not None:
        model.cfg = model.cfg.with_response(model.cfg.response - lr * grads.y)


def _sum_gradients(items):
    items = list(items)
    total = Gradients(kernels=sum(g.kernels for g in items), biases=sum(g.biases for g in items),
                      s=sum(g.s for g in items), b=sum(g.b for g in items))
    if items[0].y is not None:
        total.y = sum(g.y for g in items)
    if items[0].alpha is not None:
        total.alpha = sum(g.alpha for g in items)
    return total


def _scale(grads, c):
    return Gradients(kernels=grads.kernels * c, biases=grads.biases * c, s=grads.s * c,
                     b=grads.b * c, y=None if grads.y is None else grads.y * c,
                     alpha=None if grads.alpha is None else grads.alpha * c)


@dataclass
class TrainResult:
    model: CFNet
    losses: list = field(default_factory=list)


def global_norm(grads):
    total = np.sum(grads.kernels ** 2) + np.sum(grads.biases ** 2) + grads.s ** 2 + grads.b ** 2
    for extra in (grads.y, grads.alpha):
        if extra is not None:
            total += np.sum(extra ** 2)
    return float(np.sqrt(total))


DEFAULT_LR = 1.0
DEFAULT_CLIP = 0.05


def sgd_train(dataset, model, epochs=100, batch_size=8, lr=DEFAULT_LR, seed=0, decay=0.99,
              clip=DEFAULT_CLIP, log=None):
    """Plain mini-batch SGD; returns the trained copy and per-epoch mean losses.

    The learning rate decays geometrically by ``decay`` after every epoch.
    Batches are visited in a seeded random order; gradients within a batch
    are reduced in order so the trace is deterministic. With ``clip`` set,
    batch gradients whose global norm exceeds it are rescaled to that norm.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    model = model.copy()
    rng = np.random.default_rng(seed)
    losses = []
    rate = lr
    for epoch in range(epochs):
        order = rng.permutation(len(dataset))
        pair_losses = np.zeros(len(dataset))
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            grads = []
            for idx in batch:
                loss, cache = forward_loss(dataset[idx], model)
                if not np.isfinite(loss):
                    raise DivergedLoss(f"non-finite loss in epoch {epoch + 1}")
                pair_losses[idx] = loss
                grads.append(backward_loss(cache))
            if rate != 0.0:
                mean = _scale(_sum_gradients(grads), 1.0 / len(batch))
                if clip is not None:
                    norm = global_norm(mean)
                    if norm > clip:
                        mean = _scale(mean, clip / norm)
                apply_update(model, mean, rate)
        # exact sum, so the trace does not depend on the visiting order
        losses.append(math.fsum(pair_losses) / len(dataset))
        if log is not None:
            log(epoch + 1, losses[-1])
        rate *= decay
    return TrainResult(model=model, losses=losses)


# ---------------------------------------------------------------- checkpoints


def _model_state(model):
    return {
        "kernels": model.params.kernels.tolist(),
        "biases": model.params.biases.tolist(),
        "stride": model.params.stride,
        "s": model.cal.s,
        "b": model.cal.b,
        "lam": model.cfg.lam,
        "m": model.cfg.m,
        "crop_margin": model.cfg.crop_margin,
        "response": model.cfg.response.tolist(),
        "window": model.cfg.window.tolist(),
        "search_feature_side": model.search_feature_side,
        "alpha": None if model.alpha is None else model.alpha.tolist(),
        "learn_y": model.learn_y,
    }


def config_hash(state):
    shape_info = {
        "kernels": list(np.shape(state["kernels"])),
        "m": state["m"],
        "crop_margin": state["crop_margin"],
        "stride": state["stride"],
        "search_feature_side": state["search_feature_side"],
        "constant_alpha": state["alpha"] is not None,
    }
    blob = json.dumps(shape_info, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def dumps_checkpoint(model):
    state = _model_state(model)
    doc = {"format": "cfnet-checkpoint", "version": CHECKPOINT_VERSION,
           "config_hash": config_hash(state), "state": state}
    return json.dumps(doc, sort_keys=True)


def loads_checkpoint(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from exc
    if doc.get("format") != "cfnet-checkpoint":
        raise CheckpointError("not a cfnet checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    state = doc["state"]
    if config_hash(state) != doc.get("config_hash"):
        raise CheckpointError("config hash mismatch; checkpoint is corrupt or edited")
    try:
        params = FeatureNetParams(np.array(state["kernels"]), np.array(state["biases"]),
                                  int(state["stride"]))
        cfg = cf.CFConfig(lam=float(state["lam"]), m=int(state["m"]),
                          response=np.array(state["response"]), window=np.array(state["window"]),
                          crop_margin=int(state["crop_margin"]))
        alpha = None if state["alpha"] is None else np.array(state["alpha"])
        if alpha is not None and alpha.shape != (cfg.m, cfg.m):
            raise ShapeMismatch(f"alpha shape {alpha.shape} does not match m={cfg.m}")
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"invalid checkpoint contents: {exc}") from exc
    return CFNet(params=params, cal=cf.ScoreCalibration(float(state["s"]), float(state["b"])),
                 cfg=cfg, search_feature_side=int(state["search_feature_side"]),
                 alpha=alpha, learn_y=bool(state["learn_y"]))


def with_lambda(model, lam):
    out = model.copy()
    out.cfg = replace(out.cfg, lam=lam)
    return out
