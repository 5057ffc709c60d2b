"""Two-step rational filter model and its three-term objective.

Step 1 filters the transformed input with a Chebyshev polynomial (the
numerator). Step 2 passes the result through an MLP that stands in for the
inverse of the denominator polynomial; a regularizer pulls the MLP output,
filtered by the denominator polynomial, back onto the numerator output.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    AdamState, Tape, Tensor, adam_step, as_tensor, cross_entropy, dropout,
    linear, mse, relu, softmax_rows,
)
from .chebyshev import NodeValueCoeffs, cheb_apply, combine, interp_matrix, interp_to_coeffs
from .errors import NonFiniteLossError, ShapeError
from .constants import TOLERANCES


@dataclass
class RationalFilterParams:
    w: Tensor
    b: Tensor
    gamma_num: Tensor
    gamma_den: Tensor
    mlp: list
    dropout_p: float = 0.0
    variant: str = 'ergnn'

    @property
    def num_order(self) -> int:
        return self.gamma_num.shape[0] - 1

    @property
    def den_order(self) -> int:
        return self.gamma_den.shape[0] - 1

    def tensors(self) -> dict:
        """Trainable tensors of this variant, by name, in a fixed order."""
        out = {'w': self.w, 'b': self.b}
        if self.variant != 'mlp':
            out['gamma_num'] = self.gamma_num
        if self.variant == 'ergnn':
            out['gamma_den'] = self.gamma_den
        if self.variant != 'numerator_only':
            for i, (w, b) in enumerate(self.mlp):
                out[f'mlp.{i}.weight'] = w
                out[f'mlp.{i}.bias'] = b
        return out

    def numerator(self) -> NodeValueCoeffs:
        return NodeValueCoeffs(self.num_order, self.gamma_num.data.ravel())

    def denominator(self) -> NodeValueCoeffs:
        return NodeValueCoeffs(self.den_order, self.gamma_den.data.ravel())

    def copy(self) -> 'RationalFilterParams':
        def clone(t):
            return Tensor(t.data, requires_grad=t.requires_grad)
        return RationalFilterParams(
            w=clone(self.w),
            b=clone(self.b),
            gamma_num=clone(self.gamma_num),
            gamma_den=clone(self.gamma_den),
            mlp=[(clone(w), clone(b)) for w, b in self.mlp],
            dropout_p=self.dropout_p,
            variant=self.variant,
        )


@dataclass
class LossWeights:
    eta: float = 1.0
    xi: float = 1.0

    def __post_init__(self):
        for name in ('eta', 'xi'):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")


@dataclass
class ForwardOutputs:
    z0: Tensor
    z1: Tensor
    z2: Tensor


def _glorot(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True)


def init_params(config, in_features: int, out_features: int, seed: int) -> RationalFilterParams:
    """Initial parameters for `config`.

    Weights are Glorot-uniform, biases zero. Numerator and denominator node
    values start at 1, so the numerator is the identity filter and the
    denominator the constant-1 filter.

    Args:
        config (ExperimentConfig): orders, MLP shape, dropout and variant.
        in_features (int): width of the raw node features.
        out_features (int): class count (classification) or signal width (regression).
        seed (int): random seed.
    """
    if in_features < 1 or out_features < 1:
        raise ShapeError(f"widths must be positive, got in={in_features}, out={out_features}")
    rng = np.random.default_rng(seed)
    w = _glorot(rng, in_features, out_features)
    b = Tensor(np.zeros((1, out_features)), requires_grad=True)
    widths = [out_features] + [config.mlp_hidden] * (config.mlp_layers - 1) + [out_features]
    mlp = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        mlp.append((_glorot(rng, fan_in, fan_out), Tensor(np.zeros((1, fan_out)), requires_grad=True)))
    return RationalFilterParams(
        w=w,
        b=b,
        gamma_num=Tensor(np.ones((config.K1 + 1, 1)), requires_grad=True),
        gamma_den=Tensor(np.ones((config.K2 + 1, 1)), requires_grad=True),
        mlp=mlp,
        dropout_p=config.dropout_p,
        variant=config.variant,
    )


def _seed_list(seed):
    return list(seed) if isinstance(seed, (tuple, list)) else [seed]


def mlp_apply(layers, z, dropout_p=0.0, training=False, seed=0) -> Tensor:
    """MLP with ReLU between layers and dropout on every layer input."""
    h = as_tensor(z)
    for i, (w, b) in enumerate(layers):
        h = dropout(h, dropout_p, seed=[*_seed_list(seed), i], training=training)
        h = linear(h, w, b)
        if i < len(layers) - 1:
            h = relu(h)
    return h


def forward(params: RationalFilterParams, x, lhat, training=False, seed=0) -> ForwardOutputs:
    """z0 = xW + b, z1 = p(L_hat) z0, z2 = MLP(z1).

    L_hat is only ever applied through sparse products.
    """
    x = as_tensor(x)
    if x.shape[0] != lhat.num_nodes:
        raise ShapeError(f"features have {x.shape[0]} rows, graph has {lhat.num_nodes} nodes")
    z0 = linear(x, params.w, params.b)
    if params.variant == 'mlp':
        z1 = z0
    else:
        alpha = Tensor(interp_matrix(params.num_order)) @ params.gamma_num
        z1 = combine(cheb_apply(lhat, z0, params.num_order), alpha)
    if params.variant == 'numerator_only':
        z2 = z1
    else:
        z2 = mlp_apply(params.mlp, z1, params.dropout_p, training, seed)
    return ForwardOutputs(z0=z0, z1=z1, z2=z2)


def denominator_apply(lhat, gamma_den, z2):
    """q(L_hat) z2 with q = sum_k beta_k T_k and beta interpolated from `gamma_den`.

    Differentiable in both arguments when they are Tensors.
    """
    if isinstance(gamma_den, NodeValueCoeffs):
        beta = interp_to_coeffs(gamma_den)
        order = gamma_den.order
    elif isinstance(gamma_den, Tensor):
        order = gamma_den.shape[0] - 1
        beta = Tensor(interp_matrix(order)) @ gamma_den
    else:
        values = np.asarray(gamma_den, dtype=np.float64).reshape(-1)
        order = values.size - 1
        beta = interp_matrix(order) @ values
    if z2.shape[0] != lhat.num_nodes:
        raise ShapeError(f"signal has {z2.shape[0]} rows, graph has {lhat.num_nodes} nodes")
    return combine(cheb_apply(lhat, z2, order), beta)


def _check_targets(y, outputs, mode):
    y = np.asarray(y)
    n, width = outputs.z1.shape
    if mode == 'classification':
        if y.ndim != 1 or not np.issubdtype(y.dtype, np.integer):
            raise ValueError("classification targets must be a 1-d array of class indices")
        if y.shape[0] != n:
            raise ShapeError(f"{y.shape[0]} labels for {n} nodes")
        if y.size and (y.min() < 0 or y.max() >= width):
            raise ValueError(f"labels must lie in [0, {width}), got range [{y.min()}, {y.max()}]")
    elif mode == 'regression':
        if not np.issubdtype(y.dtype, np.floating):
            raise ValueError("regression targets must be real-valued signals")
        y = y.reshape(-1, 1) if y.ndim == 1 else y
        if y.shape != (n, width):
            raise ShapeError(f"regression target shape {y.shape} does not match outputs {(n, width)}")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return y


def loss_components(outputs, y, mask, lhat, params, lw, mode, detach_target=False):
    """Total objective and its three terms.

    Classification: eta*CE(z1, y) + xi*CE(z2, y) + CE(z1, softmax(q(L_hat) z2)).
    Regression: the same with MSE and no softmax. The first two terms use the
    training mask; the regularizer uses every node.

    Returns:
        tuple: (total Tensor, dict with 'nume', 'deno' and 'r' Tensors or None).
    """
    y = _check_targets(y, outputs, mode)
    supervised = cross_entropy if mode == 'classification' else mse
    terms = {'nume': None, 'deno': None, 'r': None}

    if params.variant == 'mlp':
        terms['deno'] = supervised(outputs.z2, y, mask)
        return terms['deno'], terms

    terms['nume'] = supervised(outputs.z1, y, mask)
    total = lw.eta * terms['nume']
    if params.variant == 'numerator_only':
        return total, terms

    terms['deno'] = supervised(outputs.z2, y, mask)
    anchor = denominator_apply(lhat, params.gamma_den, outputs.z2)
    if mode == 'classification':
        anchor = softmax_rows(anchor)
    if detach_target:
        anchor = anchor.detach()
    terms['r'] = supervised(outputs.z1, anchor)
    total = total + lw.xi * terms['deno'] + terms['r']
    return total, terms


def loss(outputs, y, mask, lhat, params, lw, mode, detach_target=False) -> Tensor:
    """L = eta * L_nume + xi * L_deno + L_r as a scalar Tensor."""
    return loss_components(outputs, y, mask, lhat, params, lw, mode, detach_target)[0]


@dataclass
class TrainBatch:
    """Everything a training step needs besides the parameters."""
    x: np.ndarray
    y: np.ndarray
    mask: np.ndarray
    lhat: object
    mode: str
    weights: LossWeights = field(default_factory=LossWeights)
    detach_target: bool = False
    seed: int = 0
    denominator_warned: bool = False


def train_step(params: RationalFilterParams, batch: TrainBatch, state: AdamState) -> float:
    """One forward, one backward through all loss terms, one Adam update.

    Returns:
        float: the loss before the update.
    """
    tensors = params.tensors()
    for t in tensors.values():
        t.zero_grad()
    with Tape() as tape:
        outputs = forward(params, batch.x, batch.lhat, training=True, seed=[batch.seed, state.t])
        total, terms = loss_components(
            outputs, batch.y, batch.mask, batch.lhat, params,
            batch.weights, batch.mode, batch.detach_target,
        )
    value = total.item()
    if not np.isfinite(value):
        parts = {k: (v.item() if v is not None else None) for k, v in terms.items()}
        raise NonFiniteLossError(f"non-finite loss {value} at step {state.t + 1}: {parts}")
    tape.backward(total)
    adam_step(tensors, state)

    if params.variant == 'ergnn' and not batch.denominator_warned:
        beta = interp_to_coeffs(params.denominator())
        if np.abs(beta).sum() < TOLERANCES['degenerate_denominator']:
            logging.warning(
                f"Denominator coefficients collapsed (|beta|_1 = {np.abs(beta).sum():.2e}) at step {state.t}"
            )
            batch.denominator_warned = True
    return value


def predict(params: RationalFilterParams, x, lhat) -> np.ndarray:
    """Model output z2 in evaluation mode."""
    return forward(params, x, lhat, training=False).z2.data


def save_params(params: RationalFilterParams, path):
    """Write parameters to a .npz file. Arrays round-trip bit-exactly."""
    arrays = {
        'w': params.w.data,
        'b': params.b.data,
        'gamma_num': params.gamma_num.data,
        'gamma_den': params.gamma_den.data,
        'dropout_p': np.array(params.dropout_p),
        'variant': np.array(params.variant),
        'mlp_layers': np.array(len(params.mlp)),
    }
    for i, (w, b) in enumerate(params.mlp):
        arrays[f'mlp.{i}.weight'] = w.data
        arrays[f'mlp.{i}.bias'] = b.data
    with open(path, 'wb') as file:
        np.savez(file, **arrays)


def load_params(path) -> RationalFilterParams:
    with np.load(path, allow_pickle=False) as f:
        mlp = []
        for i in range(int(f['mlp_layers'])):
            mlp.append((
                Tensor(f[f'mlp.{i}.weight'], requires_grad=True),
                Tensor(f[f'mlp.{i}.bias'], requires_grad=True),
            ))
        return RationalFilterParams(
            w=Tensor(f['w'], requires_grad=True),
            b=Tensor(f['b'], requires_grad=True),
            gamma_num=Tensor(f['gamma_num'], requires_grad=True),
            gamma_den=Tensor(f['gamma_den'], requires_grad=True),
            mlp=mlp,
            dropout_p=float(f['dropout_p']),
            variant=str(f['variant']),
        )
