"""Small neural toolkit with hand-written gradients.

Dense and LSTM layers (plus a bidirectional wrapper) over float64 numpy,
trained by mini-batch Adam. Gradients are derived manually and verified
against central finite differences in the test suite. A closed-form ridge
autoregressor serves as a linear baseline and optimizer oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import WindowDataset

ACTIVATIONS = ("linear", "relu", "tanh", "sigmoid", "leaky_relu")


class ShapeError(ValueError):
    """Input incompatible with a layer; message names the offending layer."""


class TrainingDiverged(RuntimeError):
    """Loss or gradient became non-finite during training."""


def _activate(name: str, z: np.ndarray, alpha: float) -> np.ndarray:
    if name == "linear":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "leaky_relu":
        return np.where(z > 0.0, z, alpha * z)
    raise ValueError(f"unknown activation {name!r}")


def _activate_grad(name: str, z: np.ndarray, out: np.ndarray, alpha: float) -> np.ndarray:
    # derivative with respect to z, reusing the forward output where possible
    if name == "linear":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0.0).astype(float)
    if name == "tanh":
        return 1.0 - out * out
    if name == "sigmoid":
        return out * (1.0 - out)
    if name == "leaky_relu":
        return np.where(z > 0.0, 1.0, alpha)
    raise ValueError(f"unknown activation {name!r}")


def _init_weight(rng: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(n_in)
    return rng.uniform(-bound, bound, size=(n_in, n_out))


class DenseLayer:
    """Affine map plus pointwise activation: out = act(x @ W + b)."""

    def __init__(self, n_in: int, n_out: int, activation: str = "linear",
                 alpha: float = 0.2, rng: np.random.Generator | None = None,
                 name: str = "dense"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        rng = rng or np.random.default_rng()
        self.n_in, self.n_out = n_in, n_out
        self.activation = activation
        self.alpha = alpha
        self.name = name
        self.W = _init_weight(rng, n_in, n_out)
        self.b = np.zeros(n_out)
        self.gW = np.zeros_like(self.W)
        self.gb = np.zeros_like(self.b)
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"{self.name}: expected (batch, {self.n_in}), got {x.shape}")
        z = x @ self.W + self.b
        out = _activate(self.activation, z, self.alpha)
        self._cache = (x, z, out)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError(f"{self.name}: backward before forward")
        x, z, out = self._cache
        dz = grad_out * _activate_grad(self.activation, z, out, self.alpha)
        self.gW += x.T @ dz
        self.gb += dz.sum(axis=0)
        return dz @ self.W.T

    def params(self):
        return [self.W, self.b]

    def grads(self):
        return [self.gW, self.gb]

    def spec(self):
        return ("dense", self.name, self.n_in, self.n_out, self.activation, self.alpha)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


class LSTMLayer:
    """Single-direction LSTM over (batch, time, features) sequences.

    Gate parameters are stored packed as Wx (n_in, 4H), Wh (H, 4H), b (4H)
    in gate order input, forget, cell, output. The cell output activation
    (h = o * act(c)) is tanh or relu. Forget-gate biases start at 1.
    """

    def __init__(self, n_in: int, hidden: int, activation: str = "tanh",
                 return_sequences: bool = False,
                 rng: np.random.Generator | None = None, name: str = "lstm"):
        if activation not in ("tanh", "relu"):
            raise ValueError("LSTM cell activation must be tanh or relu")
        rng = rng or np.random.default_rng()
        self.n_in, self.hidden = n_in, hidden
        self.activation = activation
        self.return_sequences = return_sequences
        self.name = name
        self.Wx = _init_weight(rng, n_in, 4 * hidden)
        self.Wh = _init_weight(rng, hidden, 4 * hidden)
        self.b = np.zeros(4 * hidden)
        self.b[hidden:2 * hidden] = 1.0
        self.gWx = np.zeros_like(self.Wx)
        self.gWh = np.zeros_like(self.Wh)
        self.gb = np.zeros_like(self.b)
        self._cache = None

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 2 and self.n_in == 1:
            x = x[:, :, None]
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ShapeError(f"{self.name}: expected (batch, time, {self.n_in}), got {x.shape}")
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        batch, steps, _ = x.shape
        hsz = self.hidden
        h = np.zeros((batch, hsz))
        c = np.zeros((batch, hsz))
        outs = np.empty((batch, steps, hsz))
        caches = []
        for t in range(steps):
            z = x[:, t] @ self.Wx + h @ self.Wh + self.b
            i = _sigmoid(z[:, :hsz])
            f = _sigmoid(z[:, hsz:2 * hsz])
            g = np.tanh(z[:, 2 * hsz:3 * hsz])
            o = _sigmoid(z[:, 3 * hsz:])
            c_prev = c
            c = f * c_prev + i * g
            hc = _activate(self.activation, c, 0.0)
            h = o * hc
            outs[:, t] = h
            caches.append((x[:, t], h, c, c_prev, i, f, g, o, hc))
        self._cache = (x, caches)
        return outs if self.return_sequences else outs[:, -1]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError(f"{self.name}: backward before forward")
        x, caches = self._cache
        batch, steps, _ = x.shape
        hsz = self.hidden
        grad_out = np.asarray(grad_out, dtype=float)
        dx = np.zeros_like(x)
        dh_next = np.zeros((batch, hsz))
        dc_next = np.zeros((batch, hsz))
        for t in range(steps - 1, -1, -1):
            x_t, h, c, c_prev, i, f, g, o, hc = caches[t]
            if self.return_sequences:
                dh = grad_out[:, t] + dh_next
            else:
                dh = dh_next + (grad_out if t == steps - 1 else 0.0)
            do = dh * hc
            dc = dh * o * _activate_grad(self.activation, c, hc, 0.0) + dc_next
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dz = np.concatenate(
                [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)],
                axis=1,
            )
            h_prev = caches[t - 1][1] if t > 0 else np.zeros((batch, hsz))
            self.gWx += x_t.T @ dz
            self.gWh += h_prev.T @ dz
            self.gb += dz.sum(axis=0)
            dx[:, t] = dz @ self.Wx.T
            dh_next = dz @ self.Wh.T
            dc_next = dc * f
        return dx

    def params(self):
        return [self.Wx, self.Wh, self.b]

    def grads(self):
        return [self.gWx, self.gWh, self.gb]

    def spec(self):
        return ("lstm", self.name, self.n_in, self.hidden, self.activation,
                int(self.return_sequences))


class BidirectionalLSTM:
    """Two LSTMs over the sequence and its reversal, outputs concatenated.

    Per-step outputs are re-aligned to input time order; the summary output
    (return_sequences=False) concatenates each direction's final state.
    """

    def __init__(self, fwd: LSTMLayer, bwd: LSTMLayer, return_sequences: bool = False,
                 name: str = "bilstm"):
        if fwd.hidden != bwd.hidden or fwd.n_in != bwd.n_in:
            raise ShapeError(f"{name}: direction layers must share dimensions")
        fwd.return_sequences = True
        bwd.return_sequences = True
        self.fwd, self.bwd = fwd, bwd
        self.return_sequences = return_sequences
        self.name = name

    @classmethod
    def create(cls, n_in: int, hidden: int, activation: str = "tanh",
               return_sequences: bool = False,
               rng: np.random.Generator | None = None, name: str = "bilstm"):
        rng = rng or np.random.default_rng()
        fwd = LSTMLayer(n_in, hidden, activation, True, rng, f"{name}.fwd")
        bwd = LSTMLayer(n_in, hidden, activation, True, rng, f"{name}.bwd")
        return cls(fwd, bwd, return_sequences, name)

    @property
    def hidden(self) -> int:
        return self.fwd.hidden

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = self.fwd._check_input(x)
        out_f = self.fwd.forward(x)
        out_b = self.bwd.forward(x[:, ::-1])
        if self.return_sequences:
            return np.concatenate([out_f, out_b[:, ::-1]], axis=2)
        return np.concatenate([out_f[:, -1], out_b[:, -1]], axis=1)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        hsz = self.hidden
        grad_out = np.asarray(grad_out, dtype=float)
        if self.return_sequences:
            gf = grad_out[:, :, :hsz]
            gb = grad_out[:, :, hsz:][:, ::-1]
            dx_f = self.fwd.backward(gf)
            dx_b = self.bwd.backward(gb)
        else:
            batch = grad_out.shape[0]
            steps = self.fwd._cache[0].shape[1]
            gf = np.zeros((batch, steps, hsz))
            gf[:, -1] = grad_out[:, :hsz]
            gb = np.zeros((batch, steps, hsz))
            gb[:, -1] = grad_out[:, hsz:]
            dx_f = self.fwd.backward(gf)
            dx_b = self.bwd.backward(gb)
        return dx_f + dx_b[:, ::-1]

    def params(self):
        return self.fwd.params() + self.bwd.params()

    def grads(self):
        return self.fwd.grads() + self.bwd.grads()

    def spec(self):
        return ("bilstm", self.name, self.fwd.n_in, self.fwd.hidden,
                self.fwd.activation, int(self.return_sequences))


def bidirectional_forward(fwd: LSTMLayer, bwd: LSTMLayer, seq: np.ndarray) -> np.ndarray:
    """Per-step concatenated (dim 2H) bidirectional pass over one sequence batch."""
    return BidirectionalLSTM(fwd, bwd, return_sequences=True).forward(seq)


class Network:
    """Ordered stack of layers with composed forward/backward passes."""

    def __init__(self, layers: list, name: str = "net"):
        self.layers = layers
        self.name = name

    def forward(self, x: np.ndarray) -> np.ndarray:
        out = np.asarray(x, dtype=float)
        for layer in self.layers:
            out = layer.forward(out)
            if not np.all(np.isfinite(out)):
                raise TrainingDiverged(f"{layer.name}: non-finite output")
        return out

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def grads(self):
        return [g for layer in self.layers for g in layer.grads()]

    def zero_grads(self):
        for g in self.grads():
            g[...] = 0.0


@dataclass
class AdamState:
    """Per-parameter moment estimates for bias-corrected Adam."""

    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, lr: float = 1e-3, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls([np.zeros_like(p) for p in params],
                   [np.zeros_like(p) for p in params], 0, lr, beta1, beta2, eps)


def adam_step(params, grads, state: AdamState) -> None:
    """One in-place bias-corrected Adam update over aligned param/grad lists."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged("non-finite gradient in Adam update")
        m += (1 - b1) * (g - m)
        v += (1 - b2) * (g * g - v)
        m_hat = m / (1 - b1 ** state.t)
        v_hat = v / (1 - b2 ** state.t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def clip_gradients(grads, max_norm: float | None) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm is not None and total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error and its gradient with respect to pred."""
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


BCE_CLAMP = 1e-7


def bce_loss(p: np.ndarray, label):
    """Mean binary cross-entropy on probabilities clamped to
    [1e-7, 1 - 1e-7]; gradient is with respect to the raw p."""
    p = np.asarray(p, dtype=float)
    label = np.broadcast_to(np.asarray(label, dtype=float), p.shape)
    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = float(np.mean(-(label * np.log(pc) + (1 - label) * np.log(1 - pc))))
    grad = np.where(
        (p > BCE_CLAMP) & (p < 1.0 - BCE_CLAMP),
        (pc - label) / (pc * (1 - pc)),
        0.0,
    ) / p.size
    return loss, grad


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    loss: str = "mse"
    clip_norm: float | None = 5.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs, batch_size and lr must be positive")
        if self.loss not in ("mse", "bce"):
            raise ValueError("loss must be 'mse' or 'bce'")


def train(net: Network, ds: WindowDataset, cfg: TrainConfig,
          rng: np.random.Generator | None = None) -> list[float]:
    """Mini-batch Adam training; returns the per-epoch mean loss history."""
    if len(ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    loss_fn = mse_loss if cfg.loss == "mse" else bce_loss
    state = AdamState.for_params(net.params(), lr=cfg.lr)
    n = len(ds)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            pred = net.forward(ds.X[idx])
            loss, grad = loss_fn(pred, ds.Y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"{net.name}: non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            net.zero_grads()
            net.backward(grad)
            clip_gradients(net.grads(), cfg.clip_norm)
            adam_step(net.params(), net.grads(), state)
            batch_losses.append(loss)
        history.append(float(np.mean(batch_losses)))
    return history


def predict(net: Network, x: np.ndarray) -> np.ndarray:
    """Forecast one window (D,) -> (P,) or a batch (n, D) -> (n, P)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    out = net.forward(x[None, :] if single else x)
    return out[0] if single else out


def build_lstm_forecaster(window: int, horizon: int, hidden: int = 64,
                          activation: str = "tanh",
                          rng: np.random.Generator | None = None) -> Network:
    """Unidirectional LSTM forecaster: LSTM(hidden) -> Dense(horizon)."""
    rng = rng or np.random.default_rng()
    return Network([
        LSTMLayer(1, hidden, activation, False, rng, "lstm_0"),
        DenseLayer(hidden, horizon, "linear", rng=rng, name="out"),
    ], name="lstm")


def build_bdlstm_forecaster(window: int, horizon: int, hidden: int = 32,
                            activation: str = "relu",
                            rng: np.random.Generator | None = None) -> Network:
    """Two stacked bidirectional LSTM layers (ReLU cells) -> Dense(horizon)."""
    rng = rng or np.random.default_rng()
    return Network([
        BidirectionalLSTM.create(1, hidden, activation, True, rng, "bilstm_0"),
        BidirectionalLSTM.create(2 * hidden, hidden, activation, False, rng, "bilstm_1"),
        DenseLayer(2 * hidden, horizon, "linear", rng=rng, name="out"),
    ], name="bdlstm")


@dataclass(frozen=True)
class RidgeModel:
    """Closed-form linear autoregressor; coef is (D+1, P) with bias row last."""

    coef: np.ndarray
    lam: float


def ridge_ar_fit(ds: WindowDataset, lam: float) -> RidgeModel:
    """Solve (A'A + lam I) beta = A'Y per output step, A = [X, 1]."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    a = np.hstack([ds.X, np.ones((len(ds), 1))])
    if lam == 0.0 and np.linalg.matrix_rank(a) < a.shape[1]:
        raise ValueError("design matrix is rank-deficient; use lam > 0")
    gram = a.T @ a + lam * np.eye(a.shape[1])
    coef = np.linalg.solve(gram, a.T @ ds.Y)
    return RidgeModel(coef, lam)


def ridge_to_network(model: RidgeModel) -> Network:
    """Re-express a fitted ridge model as a single linear dense layer, so it
    shares the save/load format of the neural forecasters."""
    d = model.coef.shape[0] - 1
    layer = DenseLayer(d, model.coef.shape[1], "linear", name="ridge")
    layer.W[...] = model.coef[:d]
    layer.b[...] = model.coef[d]
    return Network([layer], name="ridge")


def ridge_predict(model: RidgeModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = np.hstack([np.atleast_2d(x), np.ones((1 if single else x.shape[0], 1))])
    out = xb @ model.coef
    return out[0] if single else out


# --- flat text serialization ------------------------------------------------

_PARAM_FMT = "%.17g"


def save_model(net: Network, path) -> None:
    """Header of layer specs, then one whitespace-joined line per parameter
    array (17 significant digits), in params() order."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"evforecast-model v1 {net.name}\n")
        fh.write(f"layers {len(net.layers)}\n")
        for layer in net.layers:
            fh.write(" ".join(str(s) for s in layer.spec()) + "\n")
        for p in net.params():
            fh.write(" ".join(_PARAM_FMT % v for v in np.ravel(p)) + "\n")


def load_model(path) -> Network:
    with open(path, encoding="utf-8") as fh:
        magic = fh.readline().split()
        if magic[:2] != ["evforecast-model", "v1"]:
            raise ValueError(f"{path}: not an evforecast model file")
        name = magic[2] if len(magic) > 2 else "net"
        n_layers = int(fh.readline().split()[1])
        layers = []
        for _ in range(n_layers):
            kind, lname, *rest = fh.readline().split()
            if kind == "dense":
                n_in, n_out, act, alpha = int(rest[0]), int(rest[1]), rest[2], float(rest[3])
                layers.append(DenseLayer(n_in, n_out, act, alpha, name=lname))
            elif kind == "lstm":
                n_in, hidden, act, rs = int(rest[0]), int(rest[1]), rest[2], bool(int(rest[3]))
                layers.append(LSTMLayer(n_in, hidden, act, rs, name=lname))
            elif kind == "bilstm":
                n_in, hidden, act, rs = int(rest[0]), int(rest[1]), rest[2], bool(int(rest[3]))
                layers.append(BidirectionalLSTM.create(n_in, hidden, act, rs, name=lname))
            else:
                raise ValueError(f"{path}: unknown layer kind {kind!r}")
        net = Network(layers, name)
        for p in net.params():
            vals = np.array([float(v) for v in fh.readline().split()])
            if vals.size != p.size:
                raise ValueError(f"{path}: parameter size mismatch")
            p[...] = vals.reshape(p.shape)
    return net
