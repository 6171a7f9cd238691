"""Bundle neural network layers and the stacked model.

A layer computes bundle maps from positional encodings (and optionally the
current features), encodes each node's signal in the shared frame, diffuses
with the bundle heat kernel and applies a pointwise nonlinearity.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import (
    Tensor, add, affine, as_tensor, concat_cols, gelu, linear_map, matmul, relu,
    row_gather, scalar_mul, tanh, transpose, reduce_sum,
)
from .bundles import BundleAssignment, desynchronize, synchronize
from .graph import Graph
from .heat import HeatOperator, bundle_heat_apply, make_heat_operator
from .params import Parameters, glorot_uniform

__all__ = [
    "BunnModelConfig", "ConfigError", "ACTIVATIONS", "phi_mlp", "phi_sumgnn", "bunn_encode",
    "bunn_layer_forward", "bunn_model_forward", "init_bunn_params", "HeatCache",
    "phi_input_width", "phi_output_width", "bundle_maps_from_phi",
]

ACTIVATIONS = {
    "relu": relu,
    "gelu": gelu,
    "tanh": tanh,
    "identity": lambda x: x,
}


class ConfigError(ValueError):
    pass


@dataclass
class BunnModelConfig:
    """Architecture of a stacked BuNN.

    Hidden width is ``bundles * bundle_dim * channels``. ``t`` is either one
    diffusion time for every layer or one per layer; ``math.inf`` selects the
    limit kernel. ``residual`` is ``"none"``, ``"after"`` (x + act(z)) or
    ``"before"`` (act(z + x)).
    """

    in_dim: int
    out_dim: int
    layers: int = 1
    bundles: int = 2
    bundle_dim: int = 2
    channels: int = 1
    t: float | list[float] = 1.0
    heat_mode: str = "auto"
    taylor_degree: int = 8
    pe_dim: int = 0
    phi_kind: str = "mlp"
    phi_depth: int = 2
    phi_hidden: int = 16
    phi_shared: bool = False
    phi_uses_features: bool = False
    householder_reflections: int = 0
    activation: str = "relu"
    residual: str = "none"
    encoder: bool = True
    decoder_hidden: int = 0
    readout: str = "node"

    def __post_init__(self):
        if self.layers < 0:
            raise ConfigError("layers must be >= 0")
        if min(self.bundles, self.bundle_dim, self.channels) < 1:
            raise ConfigError("bundles, bundle_dim and channels must be positive")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.residual not in ("none", "after", "before"):
            raise ConfigError(f"unknown residual mode {self.residual!r}")
        if self.phi_kind not in ("mlp", "sumgnn"):
            raise ConfigError(f"unknown phi kind {self.phi_kind!r}")
        if self.readout not in ("node", "root", "mean"):
            raise ConfigError(f"unknown readout {self.readout!r}")
        if self.phi_depth < 1:
            raise ConfigError("phi_depth must be >= 1")
        if not self.encoder and self.in_dim != self.hidden:
            raise ConfigError("without an encoder the input width must equal the hidden width")
        if self.uses_angles and self.bundles % 2:
            raise ConfigError("2-dimensional bundles alternate rotations and reflections; "
                              "use an even bundle count")
        if self.layers and self.pe_dim < 1 and not self.phi_uses_features:
            raise ConfigError("the bundle-map network needs positional encodings or features")
        times = self.layer_times()
        if any(t < 0 for t in times):
            raise ConfigError("diffusion times must be >= 0")

    @property
    def hidden(self) -> int:
        return self.bundles * self.bundle_dim * self.channels

    @property
    def uses_angles(self) -> bool:
        return self.bundle_dim == 2 and self.householder_reflections == 0

    @property
    def reflections(self) -> int:
        return self.householder_reflections or self.bundle_dim

    def layer_times(self) -> list[float]:
        if isinstance(self.t, (list, tuple)):
            if len(self.t) != self.layers:
                raise ConfigError(f"{len(self.t)} diffusion times for {self.layers} layers")
            return [float(t) for t in self.t]
        return [float(self.t)] * self.layers

    def to_dict(self) -> dict:
        return asdict(self)


def phi_input_width(cfg: BunnModelConfig) -> int:
    return cfg.pe_dim + (cfg.hidden if cfg.phi_uses_features else 0)


def phi_output_width(cfg: BunnModelConfig) -> int:
    if cfg.uses_angles:
        return cfg.bundles
    return cfg.bundles * cfg.reflections * cfg.bundle_dim


# ---------------------------------------------------------- initialisation

def _phi_prefix(cfg: BunnModelConfig, layer: int) -> str:
    return "phi" if cfg.phi_shared else f"phi{layer}"


def _householder_bias(cfg: BunnModelConfig) -> np.ndarray:
    # reflection j of every bundle starts along axis j mod d: a constant
    # diagonal map at every node, hence a trivial connection
    k, d = cfg.reflections, cfg.bundle_dim
    one = np.zeros((k, d))
    one[np.arange(k), np.arange(k) % d] = 1.0
    return np.tile(one.reshape(-1), cfg.bundles)


def init_bunn_params(cfg: BunnModelConfig, rng: np.random.Generator) -> Parameters:
    """Glorot-uniform weights, zero biases, zero final bundle-map layer."""
    arrays: list[tuple[str, np.ndarray]] = []
    c = cfg.hidden
    if cfg.encoder:
        arrays += [("encoder.W", glorot_uniform(rng, cfg.in_dim, c)), ("encoder.b", np.zeros((1, c)))]
    phi_in, phi_out = phi_input_width(cfg), phi_output_width(cfg)
    phi_layers = 0 if not cfg.layers else (1 if cfg.phi_shared else cfg.layers)
    for ell in range(phi_layers):
        prefix = "phi" if cfg.phi_shared else f"phi{ell}"
        widths = [phi_in] + [cfg.phi_hidden] * (cfg.phi_depth - 1) + [phi_out]
        for j in range(cfg.phi_depth):
            last = j == cfg.phi_depth - 1
            fan_in, fan_out = widths[j], widths[j + 1]
            w = np.zeros((fan_in, fan_out)) if last else glorot_uniform(rng, fan_in, fan_out)
            bias = np.zeros((1, fan_out))
            if last and not cfg.uses_angles:
                bias = _householder_bias(cfg)[None, :]
            if cfg.phi_kind == "mlp":
                arrays += [(f"{prefix}.{j}.W", w)]
            else:
                wn = np.zeros((fan_in, fan_out)) if last else glorot_uniform(rng, fan_in, fan_out)
                arrays += [(f"{prefix}.{j}.Ws", w), (f"{prefix}.{j}.Wn", wn)]
            arrays += [(f"{prefix}.{j}.b", bias)]
    for ell in range(cfg.layers):
        arrays += [(f"layer{ell}.W", glorot_uniform(rng, c, c)), (f"layer{ell}.bias", np.zeros((1, c)))]
    if cfg.decoder_hidden:
        arrays += [("decoder.0.W", glorot_uniform(rng, c, cfg.decoder_hidden)),
                   ("decoder.0.b", np.zeros((1, cfg.decoder_hidden))),
                   ("decoder.1.W", glorot_uniform(rng, cfg.decoder_hidden, cfg.out_dim)),
                   ("decoder.1.b", np.zeros((1, cfg.out_dim)))]
    else:
        arrays += [("decoder.0.W", glorot_uniform(rng, c, cfg.out_dim)),
                   ("decoder.0.b", np.zeros((1, cfg.out_dim)))]
    return Parameters(arrays)


# ------------------------------------------------------ bundle-map networks

def phi_mlp(layers: list[tuple[Tensor, Tensor]], inputs) -> Tensor:
    """Per-node MLP: ReLU between layers, linear output (angles or vectors)."""
    h = as_tensor(inputs)
    for j, (w, b) in enumerate(layers):
        if h.shape[1] != w.shape[0]:
            raise ConfigError(f"bundle-map input width {h.shape[1]} != {w.shape[0]}")
        h = affine(h, w, b)
        if j < len(layers) - 1:
            h = relu(h)
    return h


def _neighbor_sum(g: Graph, h: Tensor) -> Tensor:
    adj = g.adjacency
    return linear_map(lambda v: adj @ v, lambda v: adj @ v, h)


def phi_sumgnn(layers: list[tuple[Tensor, Tensor, Tensor]], g: Graph, inputs) -> Tensor:
    """Sum-aggregation GNN: h <- act(h W_s + (A h) W_n + b), linear last layer."""
    if not layers:
        raise ConfigError("sum-aggregation network needs depth >= 1")
    h = as_tensor(inputs)
    for j, (ws, wn, b) in enumerate(layers):
        if h.shape[1] != ws.shape[0]:
            raise ConfigError(f"bundle-map input width {h.shape[1]} != {ws.shape[0]}")
        h = add(affine(h, ws, b), matmul(_neighbor_sum(g, h), wn))
        if j < len(layers) - 1:
            h = relu(h)
    return h


def _phi_layers(cfg: BunnModelConfig, params: Parameters, layer: int) -> list:
    prefix = _phi_prefix(cfg, layer)
    if cfg.phi_kind == "mlp":
        return [(params[f"{prefix}.{j}.W"], params[f"{prefix}.{j}.b"]) for j in range(cfg.phi_depth)]
    return [(params[f"{prefix}.{j}.Ws"], params[f"{prefix}.{j}.Wn"], params[f"{prefix}.{j}.b"])
            for j in range(cfg.phi_depth)]


def bundle_maps_from_phi(cfg: BunnModelConfig, phi_out: Tensor) -> BundleAssignment:
    n = phi_out.shape[0]
    if cfg.uses_angles:
        return BundleAssignment.from_angles(phi_out)
    return BundleAssignment.from_householder(phi_out, n, cfg.bundles, cfg.reflections, cfg.bundle_dim)


# ------------------------------------------------------------------ layers

def bunn_encode(bundle: BundleAssignment, weight, bias, x) -> Tensor:
    """h_v = O_v^T W O_v x_v + bias, W acting on the flattened node vector."""
    x = as_tensor(x)
    weight = as_tensor(weight)
    if weight.shape != (x.shape[1], x.shape[1]):
        raise ConfigError(f"weight shape {weight.shape} does not match signal width {x.shape[1]}")
    h = desynchronize(bundle, matmul(synchronize(bundle, x), transpose(weight)))
    return h if bias is None else add(h, bias)


def bunn_layer_forward(g: Graph, bundle: BundleAssignment, weight, bias, x,
                       heat: HeatOperator, activation: str = "relu") -> Tensor:
    """act(H_B(t) (O^T W O x + bias)) for precomputed bundle maps."""
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")
    h = bunn_encode(bundle, weight, bias, x)
    return ACTIVATIONS[activation](bundle_heat_apply(g, bundle, heat, h))


class HeatCache:
    """Heat operators memoised by (graph, time); eigenbases are computed once."""

    def __init__(self, mode: str = "auto", taylor_degree: int = 8):
        self.mode = mode
        self.taylor_degree = taylor_degree
        self._ops: dict = {}

    def get(self, g: Graph, t: float) -> HeatOperator:
        key = (g, t)
        op = self._ops.get(key)
        if op is None:
            eig = None
            for (other, _), known in self._ops.items():
                if other == g and known.eig is not None:
                    eig = known.eig
                    break
            op = make_heat_operator(g, t, self.mode, self.taylor_degree, eig)
            self._ops[key] = op
        return op

    def operators(self, g: Graph, times: list[float]) -> list[HeatOperator]:
        return [self.get(g, t) for t in times]


def _pe_values(pe) -> np.ndarray | None:
    if pe is None:
        return None
    return pe.values if hasattr(pe, "values") else np.asarray(pe, dtype=np.float64)


def bunn_model_forward(cfg: BunnModelConfig, params: Parameters, g: Graph, pe, x,
                       heat_ops: list[HeatOperator] | None = None,
                       cache: HeatCache | None = None, return_maps: bool = False):
    """Encoder, BuNN layers and decoder; output rows follow ``cfg.readout``."""
    x = as_tensor(x)
    if x.shape[0] != g.n:
        raise ConfigError(f"features have {x.shape[0]} rows for {g.n} nodes")
    if x.shape[1] != cfg.in_dim:
        raise ConfigError(f"features have width {x.shape[1]}, model expects {cfg.in_dim}")
    pe_vals = _pe_values(pe)
    if cfg.layers and cfg.pe_dim:
        if pe_vals is None or pe_vals.shape != (g.n, cfg.pe_dim):
            got = None if pe_vals is None else pe_vals.shape
            raise ConfigError(f"positional encodings of shape {got}, expected {(g.n, cfg.pe_dim)}")
    if heat_ops is None:
        cache = cache or HeatCache(cfg.heat_mode, cfg.taylor_degree)
        heat_ops = cache.operators(g, cfg.layer_times())
    pe_tensor = Tensor(pe_vals) if pe_vals is not None and cfg.pe_dim else None

    h = affine(x, params["encoder.W"], params["encoder.b"]) if cfg.encoder else x
    act = ACTIVATIONS[cfg.activation]
    all_maps = []
    for ell in range(cfg.layers):
        parts = ([pe_tensor] if pe_tensor is not None else []) + ([h] if cfg.phi_uses_features else [])
        phi_in = parts[0] if len(parts) == 1 else concat_cols(parts)
        layers = _phi_layers(cfg, params, ell)
        raw = phi_mlp(layers, phi_in) if cfg.phi_kind == "mlp" else phi_sumgnn(layers, g, phi_in)
        bundle = bundle_maps_from_phi(cfg, raw)
        all_maps.append(bundle)
        z = bundle_heat_apply(g, bundle, heat_ops[ell],
                              bunn_encode(bundle, params[f"layer{ell}.W"], params[f"layer{ell}.bias"], h))
        if cfg.residual == "after":
            h = add(act(z), h)
        elif cfg.residual == "before":
            h = act(add(z, h))
        else:
            h = act(z)

    if cfg.decoder_hidden:
        h = relu(affine(h, params["decoder.0.W"], params["decoder.0.b"]))
        out = affine(h, params["decoder.1.W"], params["decoder.1.b"])
    else:
        out = affine(h, params["decoder.0.W"], params["decoder.0.b"])
    if cfg.readout == "root":
        out = row_gather(out, np.array([0]))
    elif cfg.readout == "mean":
        out = scalar_mul(reduce_sum(out, axis=0), 1.0 / g.n)
    return (out, all_maps) if return_maps else out
