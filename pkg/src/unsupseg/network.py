"""The segmentation network and its training primitives.

Architecture: M conv components (3x3 conv -> ReLU -> per-channel batch norm),
a linear q-way cluster classifier applied per pixel, a final batch norm over
the q response channels, and argmax label assignment. Backpropagation through
the whole stack is hand-composed from the primitives in :mod:`unsupseg.ops`.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import ops

# conv border handling inside the network (the conv2d primitive itself
# defaults to zero padding)
_PADDING = "replicate"


@dataclass
class HyperParams:
    """Training configuration. Defaults follow the reference setup."""

    layers: int = 3  # M conv components
    feat_dim: int = 100  # p, channels per conv component
    max_labels: int = 100  # q, cluster-space dimension (upper bound on labels)
    lr: float = 0.1
    momentum: float = 0.9
    mu: float = 5.0  # spatial continuity weight
    nu: float = 0.5  # scribble weight
    iters: int = 500  # T, iteration budget
    min_labels: int = 3  # early-stop floor on the unique label count
    seed: int = 0
    eps: float = 1e-5  # batch-norm epsilon
    tv_bounds: str = "full"  # continuity-loss difference coverage: full | paper

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.feat_dim < 2 or self.max_labels < 2:
            raise ValueError("feat_dim and max_labels must be >= 2")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if not 1 <= self.min_labels <= self.max_labels:
            raise ValueError("min_labels must be in [1, max_labels]")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.tv_bounds not in ("full", "paper"):
            raise ValueError("tv_bounds must be 'full' or 'paper'")


@dataclass
class NetworkParams:
    """All trainable buffers plus the optimizer's momentum state.

    Conv kernel shapes: layer 1 is (p, 3, 3, 3), layers 2..M are (p, p, 3, 3).
    bn_gamma/bn_beta hold M feature-layer instances of size p followed by one
    response-layer instance of size q. The classifier is (q, p) with no bias.
    """

    conv_kernels: list
    conv_biases: list
    bn_gamma: list
    bn_beta: list
    classifier: np.ndarray
    momentum_state: list = field(default_factory=list)

    def trainable_arrays(self):
        """Yield (name, array) pairs in the fixed persistence order:
        conv kernels/biases layer by layer, batch-norm gamma/beta instances
        in forward order, then the classifier."""
        for m, (k, b) in enumerate(zip(self.conv_kernels, self.conv_biases)):
            yield f"conv_kernels[{m}]", k
            yield f"conv_biases[{m}]", b
        for i, (g, b) in enumerate(zip(self.bn_gamma, self.bn_beta)):
            yield f"bn_gamma[{i}]", g
            yield f"bn_beta[{i}]", b
        yield "classifier", self.classifier

    @property
    def layers(self):
        return len(self.conv_kernels)

    @property
    def feat_dim(self):
        return self.conv_kernels[0].shape[0]

    @property
    def max_labels(self):
        return self.classifier.shape[0]


@dataclass
class ParamGrads:
    """Cotangents for every trainable array, mirroring NetworkParams."""

    conv_kernels: list
    conv_biases: list
    bn_gamma: list
    bn_beta: list
    classifier: np.ndarray

    def arrays(self):
        """Gradient arrays in the same fixed order as trainable_arrays()."""
        for k, b in zip(self.conv_kernels, self.conv_biases):
            yield k
            yield b
        for g, b in zip(self.bn_gamma, self.bn_beta):
            yield g
            yield b
        yield self.classifier

    def scaled(self, factor):
        return ParamGrads(
            [factor * k for k in self.conv_kernels],
            [factor * b for b in self.conv_biases],
            [factor * g for g in self.bn_gamma],
            [factor * b for b in self.bn_beta],
            factor * self.classifier,
        )


@dataclass
class ResponseMap:
    """Per-pixel q-dimensional classifier responses, (q, H, W)."""

    values: np.ndarray
    normalized: bool = False


@dataclass
class _LayerCache:
    conv_input: np.ndarray
    cols: np.ndarray  # im2col of conv_input, reused by the backward pass
    pre_relu: np.ndarray
    post_relu: np.ndarray
    bn_stats: ops.BnStats


@dataclass
class ForwardCache:
    """Intermediates saved by forward() for the matching backward() call."""

    image: np.ndarray
    params: NetworkParams
    layer_caches: list
    features: np.ndarray
    response_bn_stats: ops.BnStats


def _xavier_uniform(rng, shape, fan_in, fan_out, dtype):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_params(hp, dtype=np.float32):
    """Xavier-uniform weights, zero biases, identity batch-norm affines.

    Conv fan-in/out count the 3x3 window (in_channels*9 / out_channels*9);
    the classifier uses p / q. Fully determined by hp.seed.
    """
    rng = np.random.default_rng(hp.seed)
    kernels, biases = [], []
    in_ch = 3
    for _ in range(hp.layers):
        kernels.append(
            _xavier_uniform(
                rng, (hp.feat_dim, in_ch, 3, 3), in_ch * 9, hp.feat_dim * 9, dtype
            )
        )
        biases.append(np.zeros(hp.feat_dim, dtype=dtype))
        in_ch = hp.feat_dim
    classifier = _xavier_uniform(
        rng, (hp.max_labels, hp.feat_dim), hp.feat_dim, hp.max_labels, dtype
    )
    bn_sizes = [hp.feat_dim] * hp.layers + [hp.max_labels]
    gamma = [np.ones(s, dtype=dtype) for s in bn_sizes]
    beta = [np.zeros(s, dtype=dtype) for s in bn_sizes]
    params = NetworkParams(kernels, biases, gamma, beta, classifier)
    params.momentum_state = [np.zeros_like(a) for _, a in params.trainable_arrays()]
    return params


def forward(image, params, hp):
    """Run the network on one (3, H, W) image.

    Returns (features, response, cache): the p-channel feature map, the
    normalized (q, H, W) response map, and the cache backward() needs.
    """
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected a (3, H, W) image, got shape {image.shape}")
    if image.shape[1] < 1 or image.shape[2] < 1:
        raise ValueError("image must be at least 1x1")
    x = image
    layer_caches = []
    for m in range(params.layers):
        # replicate padding keeps every layer translation-uniform on
        # spatially constant input, so constant images collapse to one label
        cols = ops.im2col3x3(x, padding=_PADDING)
        pre = ops.conv2d(
            x, params.conv_kernels[m], params.conv_biases[m], cols=cols, padding=_PADDING
        )
        post = ops.relu(pre)
        z, stats = ops.batch_norm_channels(
            post, params.bn_gamma[m], params.bn_beta[m], hp.eps
        )
        layer_caches.append(_LayerCache(x, cols, pre, post, stats))
        x = z
    features = x
    q, p = params.classifier.shape
    h, w = features.shape[1:]
    # per-pixel linear map realized as a 1x1 convolution
    raw = (params.classifier @ features.reshape(p, h * w)).reshape(q, h, w)
    normed, resp_stats = ops.batch_norm_channels(
        raw, params.bn_gamma[-1], params.bn_beta[-1], hp.eps
    )
    cache = ForwardCache(image, params, layer_caches, features, resp_stats)
    return features, ResponseMap(normed, normalized=True), cache


def assign_labels(response):
    """Argmax over the q response channels; ties break to the lowest index."""
    if isinstance(response, ResponseMap):
        if not response.normalized:
            raise ValueError("assign_labels requires a normalized response map")
        values = response.values
    else:
        values = response
    return np.argmax(values, axis=0).astype(np.int32)


def backward(image, params, cache, grad_response):
    """Backpropagate a response-map cotangent to every trainable array."""
    if cache.params is not params or cache.image is not image:
        raise RuntimeError("forward cache does not match this image/params pair")
    g, ggam_r, gbet_r = ops.batch_norm_channels_vjp(
        grad_response, params.bn_gamma[-1], cache.response_bn_stats
    )
    q, h, w = g.shape
    p = params.classifier.shape[1]
    g2 = g.reshape(q, h * w)
    f2 = cache.features.reshape(p, h * w)
    grad_classifier = g2 @ f2.T
    gx = (params.classifier.T @ g2).reshape(p, h, w)

    n_layers = params.layers
    gk = [None] * n_layers
    gb = [None] * n_layers
    ggam = [None] * (n_layers + 1)
    gbet = [None] * (n_layers + 1)
    ggam[-1] = ggam_r
    gbet[-1] = gbet_r
    for m in reversed(range(n_layers)):
        lc = cache.layer_caches[m]
        gz, ggam[m], gbet[m] = ops.batch_norm_channels_vjp(
            gx, params.bn_gamma[m], lc.bn_stats
        )
        ga = ops.relu_vjp(lc.pre_relu, gz)
        gx, gk[m], gb[m] = ops.conv2d_vjp(
            lc.conv_input, params.conv_kernels[m], ga, cols=lc.cols, padding=_PADDING
        )
    return ParamGrads(gk, gb, ggam, gbet, grad_classifier)


def sgd_momentum_step(params, grads, lr, momentum):
    """In-place heavy-ball update: v <- momentum*v + g; theta <- theta - lr*v."""
    for (name, arr), g, v in zip(
        params.trainable_arrays(), grads.arrays(), params.momentum_state
    ):
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name}")
        v *= momentum
        v += g
        arr -= lr * v
    return params
