"""Correspondence embedding network with a hand-written backward pass.

Architecture (per scene of N correspondences ``c_i = (x_i, y_i)``)::

    h = c @ lift_w + lift_b
    repeat B blocks:
        r = relu(context_norm(h @ perc_w + perc_b) * gamma + shift)
        logits_ij = <r_i theta, r_j phi> / sqrt(a) * beta_ij
        u = softmax_j(logits) @ (r @ g_w)
        h = r + relu(u @ mlp_w1 + mlp_b1) @ mlp_w2 + mlp_b2
    f = h / ||h||

Context normalization standardizes each channel over the N correspondences
of the scene, identically at training and inference time.
"""

import base64
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ShapeMismatch
from .seeding import derive_seed

NORM_EPS = 1e-5
CHECKPOINT_VERSION = 1

BLOCK_TENSORS = (
    "perc_w", "perc_b", "gamma", "shift", "theta", "phi", "g_w",
    "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2",
)


@dataclass
class NetConfig:
    blocks: int = 3
    feature_dim: int = 32
    attention_dim: int | None = None
    init_seed: int = 0

    def __post_init__(self):
        if self.attention_dim is None:
            self.attention_dim = max(1, self.feature_dim // 2)
        if self.blocks < 1 or self.feature_dim < 4 or self.attention_dim < 1:
            raise ValueError("need blocks >= 1, feature_dim >= 4, attention_dim >= 1")


def param_shapes(cfg):
    d, a = cfg.feature_dim, cfg.attention_dim
    shapes = {"lift_w": (6, d), "lift_b": (d,)}
    for k in range(cfg.blocks):
        shapes.update({
            f"b{k}.perc_w": (d, d), f"b{k}.perc_b": (d,),
            f"b{k}.gamma": (d,), f"b{k}.shift": (d,),
            f"b{k}.theta": (d, a), f"b{k}.phi": (d, a), f"b{k}.g_w": (d, d),
            f"b{k}.mlp_w1": (d, d), f"b{k}.mlp_b1": (d,),
            f"b{k}.mlp_w2": (d, d), f"b{k}.mlp_b2": (d,),
        })
    return shapes


def init(cfg):
    """Glorot-uniform weights, unit scale / zero shift, small uniform biases."""
    rng = np.random.default_rng(derive_seed(cfg.init_seed, "featnet-init"))
    params = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.split(".")[-1]
        if leaf == "gamma":
            params[name] = np.ones(shape)
        elif leaf == "shift":
            params[name] = np.zeros(shape)
        elif len(shape) == 2:
            a = math.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-a, a, size=shape)
        else:
            fan_in = 6 if name == "lift_b" else cfg.feature_dim
            b = 1.0 / math.sqrt(fan_in)
            params[name] = rng.uniform(-b, b, size=shape)
    return params


def check_params(params, cfg):
    for name, shape in param_shapes(cfg).items():
        if name not in params:
            raise ShapeMismatch(f"missing parameter {name}")
        if tuple(params[name].shape) != shape:
            raise ShapeMismatch(f"{name}: expected {shape}, got {tuple(params[name].shape)}")
    extra = set(params) - set(param_shapes(cfg))
    if extra:
        raise ShapeMismatch(f"unexpected parameters {sorted(extra)}")


def n_blocks(params):
    return sum(1 for k in params if k.endswith(".perc_w"))


def _softmax_rows(z):
    z = z - z.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def forward(params, corrs, beta, dtype=np.float64):
    """Embed correspondences; returns ``(features, tape)``.

    ``features`` has unit-norm rows. ``tape`` holds what ``backward`` needs.
    """
    c = np.asarray(corrs, dtype=dtype)
    beta = np.asarray(beta, dtype=dtype)
    if c.ndim != 2 or c.shape[1] != 6:
        raise ShapeMismatch(f"correspondences must have shape (N, 6), got {c.shape}")
    n = c.shape[0]
    if beta.shape != (n, n):
        raise ShapeMismatch(f"beta must have shape ({n}, {n}), got {beta.shape}")
    p = {k: np.asarray(v, dtype=dtype) for k, v in params.items()}
    if "lift_w" not in p or p["lift_w"].shape[0] != 6:
        raise ShapeMismatch("lift_w must have 6 input rows")

    h = c @ p["lift_w"] + p["lift_b"]
    blocks = []
    for k in range(n_blocks(p)):
        q = lambda name: p[f"b{k}.{name}"]  # noqa: E731
        pre = h @ q("perc_w") + q("perc_b")
        centered = pre - pre.mean(axis=0)
        inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=0) + NORM_EPS)
        z = centered * inv_std
        act = z * q("gamma") + q("shift")
        r = np.maximum(act, 0.0)
        qry = r @ q("theta")
        key = r @ q("phi")
        val = r @ q("g_w")
        scale = 1.0 / math.sqrt(qry.shape[1])
        attn = _softmax_rows((qry @ key.T) * scale * beta)
        u = attn @ val
        m1_pre = u @ q("mlp_w1") + q("mlp_b1")
        m1 = np.maximum(m1_pre, 0.0)
        h_in = h
        h = r + m1 @ q("mlp_w2") + q("mlp_b2")
        blocks.append(dict(h_in=h_in, z=z, inv_std=inv_std, act=act, r=r, qry=qry, key=key,
                           val=val, attn=attn, u=u, m1_pre=m1_pre, m1=m1, scale=scale))
    norm = np.maximum(np.linalg.norm(h, axis=1, keepdims=True), 1e-12)
    f = h / norm
    tape = dict(params=p, corrs=c, beta=beta, blocks=blocks, norm=norm, out=f)
    return f, tape


def backward(tape, upstream):
    """Gradients of a scalar loss w.r.t. every parameter, given dLoss/dfeatures."""
    p = tape["params"]
    f = tape["out"]
    g = np.asarray(upstream, dtype=f.dtype)
    if g.shape != f.shape:
        raise ShapeMismatch(f"upstream gradient must have shape {f.shape}, got {g.shape}")
    beta = tape["beta"]
    grads = {}

    dh = (g - f * np.sum(g * f, axis=1, keepdims=True)) / tape["norm"]
    for k in reversed(range(len(tape["blocks"]))):
        t = tape["blocks"][k]
        q = lambda name: p[f"b{k}.{name}"]  # noqa: E731
        pre = f"b{k}."
        n = dh.shape[0]

        dr = dh.copy()
        grads[pre + "mlp_w2"] = t["m1"].T @ dh
        grads[pre + "mlp_b2"] = dh.sum(axis=0)
        dm1 = (dh @ q("mlp_w2").T) * (t["m1_pre"] > 0)
        grads[pre + "mlp_w1"] = t["u"].T @ dm1
        grads[pre + "mlp_b1"] = dm1.sum(axis=0)
        du = dm1 @ q("mlp_w1").T

        attn = t["attn"]
        dattn = du @ t["val"].T
        dval = attn.T @ du
        dlogit = attn * (dattn - np.sum(dattn * attn, axis=1, keepdims=True))
        dsim = dlogit * beta * t["scale"]
        dqry = dsim @ t["key"]
        dkey = dsim.T @ t["qry"]
        r = t["r"]
        grads[pre + "theta"] = r.T @ dqry
        grads[pre + "phi"] = r.T @ dkey
        grads[pre + "g_w"] = r.T @ dval
        dr += dqry @ q("theta").T + dkey @ q("phi").T + dval @ q("g_w").T

        dact = dr * (t["act"] > 0)
        z = t["z"]
        grads[pre + "gamma"] = np.sum(dact * z, axis=0)
        grads[pre + "shift"] = dact.sum(axis=0)
        dz = dact * q("gamma")
        dpre = (t["inv_std"] / n) * (n * dz - dz.sum(axis=0) - z * np.sum(dz * z, axis=0))
        grads[pre + "perc_w"] = t["h_in"].T @ dpre
        grads[pre + "perc_b"] = dpre.sum(axis=0)
        dh = dpre @ q("perc_w").T

    grads["lift_w"] = tape["corrs"].T @ dh
    grads["lift_b"] = dh.sum(axis=0)
    return grads


def embed(params, corrs, beta, dtype=np.float64):
    return forward(params, corrs, beta, dtype=dtype)[0]


def save_checkpoint(path, params, cfg, rng_seed=0):
    """One JSON document: header fields plus base64 little-endian float32 tensors."""
    check_params(params, cfg)
    tensors = {}
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        tensors[name] = {"shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode("ascii")}
    doc = {"version": CHECKPOINT_VERSION, "config": asdict(cfg), "rng_seed": int(rng_seed), "tensors": tensors}
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))


def load_checkpoint(path):
    """Returns ``(params, cfg, rng_seed)``; shapes are checked against the stored config."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    cfg = NetConfig(**doc["config"])
    params = {}
    for name, t in doc["tensors"].items():
        raw = base64.b64decode(t["data"])
        arr = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if arr.size != math.prod(t["shape"]):
            raise ShapeMismatch(f"{name}: blob size does not match shape {t['shape']}")
        params[name] = arr.reshape(t["shape"])
    check_params(params, cfg)
    return params, cfg, doc.get("rng_seed", 0)
