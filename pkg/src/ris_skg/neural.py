"""Dense-network engine and the adversarial feature-generator training loop.

Everything is plain numpy: explicit forward/backward passes, a
bias-corrected Adam, and correlation-based losses with analytic gradients
(every gradient is cross-checked against finite differences in the test
suite).  Three networks take part in training: the two legitimate feature
generators eat each party's own send/receive signal pair, while the
emulated surface adversary eats the surface's received signals and phase
vector and tries to track the legitimate features.  The generators are
rewarded for agreeing with each other and penalized for being trackable.
"""

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "sine", "linear")


class TrainingDiverged(RuntimeError):
    """Raised when a loss or parameter turns non-finite during training."""


@dataclass
class Mlp:
    weights: list
    biases: list
    activations: list

    @property
    def num_layers(self):
        return len(self.weights)

    @property
    def layer_dims(self):
        dims = [self.weights[0].shape[0]]
        dims += [w.shape[1] for w in self.weights]
        return dims

    def copy(self):
        return Mlp([w.copy() for w in self.weights],
                   [b.copy() for b in self.biases],
                   list(self.activations))


def init_mlp(dims, rng, activations=None):
    """Glorot-uniform weights, fan-in-uniform biases; hidden relu, sine out.

    Non-zero bias init matters here: zero-bias rectifiers are odd-plus-even
    functions whose third Hermite coefficient vanishes, which stalls
    learning of the product-form reconstruction maps these networks chase.
    """
    if activations is None:
        activations = ["relu"] * (len(dims) - 2) + ["sine"]
    if len(activations) != len(dims) - 1:
        raise ValueError("one activation per layer required")
    for act in activations:
        if act not in ACTIVATIONS:
            raise ValueError(f"unknown activation {act!r}")
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (d_in + d_out))
        weights.append(rng.uniform(-bound, bound, (d_in, d_out)))
        biases.append(rng.uniform(-1.0, 1.0, d_out) / np.sqrt(d_in))
    return Mlp(weights, biases, list(activations))


def _apply_act(act, z):
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "sine":
        return np.sin(z)
    return z


def _act_grad(act, z):
    if act == "relu":
        return (z > 0.0).astype(np.float64)
    if act == "sine":
        return np.cos(z)
    return np.ones_like(z)


def mlp_forward(model, x):
    """Run the network on a batch; returns outputs and the backward cache.

    ``x`` is (batch, d_in) or a single (d_in,) vector.  Networks with a
    one-unit output layer return a flat (batch,) vector.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.weights[0].shape[0]:
        raise ValueError("input width does not match first layer")
    inputs, preacts = [], []
    h = x
    for w, b, act in zip(model.weights, model.biases, model.activations):
        inputs.append(h)
        z = h @ w + b
        preacts.append(z)
        h = _apply_act(act, z)
    out = h[:, 0] if h.shape[1] == 1 else h
    if single:
        out = out[0] if h.shape[1] == 1 else out[0, :]
    return out, (inputs, preacts)


def mlp_backward(model, cache, grad_out):
    """Exact reverse-mode gradients for all layers.

    ``grad_out`` matches the forward output shape; returns per-layer
    (weight, bias) gradient lists.
    """
    inputs, preacts = cache
    if len(inputs) != model.num_layers:
        raise ValueError("cache does not match model")
    g = np.asarray(grad_out, dtype=np.float64)
    if g.ndim == 0:
        g = g[None]
    if g.ndim == 1 and model.weights[-1].shape[1] == 1:
        g = g[:, None]
    if g.shape[0] != inputs[0].shape[0]:
        raise ValueError("cache is stale for this batch")
    grads_w = [None] * model.num_layers
    grads_b = [None] * model.num_layers
    for layer in range(model.num_layers - 1, -1, -1):
        delta = g * _act_grad(model.activations[layer], preacts[layer])
        grads_w[layer] = inputs[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer:
            g = delta @ model.weights[layer].T
    return grads_w, grads_b


# ---------------------------------------------------------------------------
# correlation and losses
# ---------------------------------------------------------------------------

def corr_coef(x, y):
    """Pearson correlation of two equal-length batches.

    Raises on degenerate input; the training losses instead treat a
    zero-variance batch as loss-neutral via the internal helper.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("need two equal-length 1-d batches")
    if x.size < 2:
        raise ValueError("correlation needs at least two samples")
    rho, _, _, ok = _corr_grad(x, y)
    if not ok:
        raise ValueError("zero variance batch")
    return rho


def _corr_grad(x, y):
    """Correlation plus gradients w.r.t. both arguments.

    Returns (rho, d_rho/dx, d_rho/dy, ok); degenerate batches give
    (0, 0, 0, False).
    """
    n = x.size
    cx = x - x.mean()
    cy = y - y.mean()
    sx = (cx * cx).sum() / n
    sy = (cy * cy).sum() / n
    denom = np.sqrt(sx * sy)
    if denom <= 0.0 or not np.isfinite(denom):
        z = np.zeros_like(x)
        return 0.0, z, z, False
    sxy = (cx * cy).sum() / n
    rho = sxy / denom
    gx = cy / (n * denom) - rho * cx / (n * sx)
    gy = cx / (n * denom) - rho * cy / (n * sy)
    return rho, gx, gy, True


def _abs_corr_grad(x, y):
    """|rho| and its subgradients (0 at the non-differentiable point)."""
    rho, gx, gy, ok = _corr_grad(x, y)
    if not ok or rho == 0.0:
        z = np.zeros_like(x)
        return abs(rho), z, z
    s = np.sign(rho)
    return abs(rho), s * gx, s * gy


@dataclass
class LossResult:
    loss: float
    d_fa: np.ndarray = None
    d_fb: np.ndarray = None
    d_fm: np.ndarray = None
    rho_ab: float = 0.0
    rho_am: float = 0.0
    rho_bm: float = 0.0


def generator_loss(f_a, f_b, f_m, lam):
    """Agreement-vs-leakage objective for the legitimate generators.

    Minimizes ``-|rho(f_a, f_b)| + lam * (|rho(f_a, f_m)| + |rho(f_b, f_m)|)``
    with the adversary features treated as constants.
    """
    r_ab, ga_ab, gb_ab = _abs_corr_grad(f_a, f_b)
    r_am, ga_am, _ = _abs_corr_grad(f_a, f_m)
    r_bm, gb_bm, _ = _abs_corr_grad(f_b, f_m)
    loss = -r_ab + lam * (r_am + r_bm)
    d_fa = -ga_ab + lam * ga_am
    d_fb = -gb_ab + lam * gb_bm
    return LossResult(loss, d_fa=d_fa, d_fb=d_fb,
                      rho_ab=r_ab, rho_am=r_am, rho_bm=r_bm)


def adversary_loss(f_a, f_b, f_m):
    """Tracking objective for the emulated adversary.

    Minimizes ``-|rho(f_a, f_m)| - |rho(f_b, f_m)|`` with the generator
    features treated as constants.
    """
    r_am, _, gm_am = _abs_corr_grad(f_a, f_m)
    r_bm, _, gm_bm = _abs_corr_grad(f_b, f_m)
    loss = -r_am - r_bm
    return LossResult(loss, d_fm=-gm_am - gm_bm, rho_am=r_am, rho_bm=r_bm)


def mse_adversarial_loss(f_a, f_b, f_m, lam):
    """Mean-squared-error variant of the generator objective.

    Kept for the ablation study: it can be driven to zero by collapsing
    both outputs onto a constant, which destroys the feature randomness
    the correlation loss preserves.
    """
    n = f_a.size
    d_ab = f_a - f_b
    d_am = f_a - f_m
    d_bm = f_b - f_m
    mse_ab = (d_ab * d_ab).mean()
    mse_am = (d_am * d_am).mean()
    mse_bm = (d_bm * d_bm).mean()
    loss = mse_ab - lam * (mse_am + mse_bm)
    d_fa = 2.0 * d_ab / n - lam * 2.0 * d_am / n
    d_fb = -2.0 * d_ab / n - lam * 2.0 * d_bm / n
    rho_ab, _, _, _ = _corr_grad(f_a, f_b)
    rho_am, _, _, _ = _corr_grad(f_a, f_m)
    rho_bm, _, _, _ = _corr_grad(f_b, f_m)
    return LossResult(loss, d_fa=d_fa, d_fb=d_fb,
                      rho_ab=rho_ab, rho_am=rho_am, rho_bm=rho_bm)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params):
    return AdamState(m=[np.zeros_like(p) for p in params],
                     v=[np.zeros_like(p) for p in params])


def adam_step(state, params, grads, lr):
    """One bias-corrected Adam update, in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter/gradient shape mismatch")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError("parameter/gradient shape mismatch")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
    return params


def _flat_params(model):
    return model.weights + model.biases


def _flat_grads(gw, gb):
    return gw + gb


# ---------------------------------------------------------------------------
# input assembly and scaling
# ---------------------------------------------------------------------------

@dataclass
class FeatureScaler:
    """Per-column affine normalization fitted on training inputs.

    The raw signal magnitudes span several decades (surface phases carry
    the amplification factor while far-distance receive signals sit near
    the noise floor), so all networks train on standardized columns.  The
    fitted constants are public and part of the saved artifact.
    """

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x):
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(mean=mean, std=std)

    def apply(self, x):
        return (x - self.mean) / self.std


def generator_inputs(ds, party):
    """(n, 4) real matrix of one party's send/receive signal pair."""
    if party == "a":
        x, y = ds.x_a, ds.y_a
    elif party == "b":
        x, y = ds.x_b, ds.y_b
    else:
        raise ValueError("party must be 'a' or 'b'")
    return np.column_stack([x.real, x.imag, y.real, y.imag])


def adversary_inputs(ds):
    """(n, 6M) real matrix: surface receive signals plus phase vector."""
    return np.hstack([
        ds.y_r_a.real, ds.y_r_a.imag,
        ds.y_r_b.real, ds.y_r_b.imag,
        ds.w.real, ds.w.imag,
    ])


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 64
    max_epochs: int = 10000
    lambda_tradeoff: float = 0.8
    loss_kind: str = "corr_adversarial"
    seed: int = 0
    gen_dims: tuple = (4, 64, 32, 1)
    adv_dims: tuple = (96, 128, 64, 1)
    # relative learning-rate of the emulated adversary; the shared-rate
    # default is the published setting, a faster adversary removes the
    # cheap cat-and-mouse escapes at small scale
    adv_lr_scale: float = 1.0
    # re-initialize the adversary every so many epochs (0 = never);
    # each restart emulates a fresh eavesdropper instance, so the
    # generators must remove leakage instead of outrunning one opponent
    adv_restart_every: int = 0

    def __post_init__(self):
        if self.lambda_tradeoff < 0:
            raise ValueError("trade-off coefficient must be non-negative")
        if self.batch_size < 2:
            raise ValueError("correlation needs batches of at least 2")
        if self.loss_kind not in ("corr_adversarial", "corr_only", "mse_adversarial"):
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")


@dataclass
class TrainLog:
    epoch: np.ndarray
    loss_gen: np.ndarray
    loss_adv: np.ndarray
    rho_ab: np.ndarray
    rho_am: np.ndarray
    rho_bm: np.ndarray

    def to_rows(self):
        return zip(self.epoch, self.loss_gen, self.loss_adv,
                   self.rho_ab, self.rho_am, self.rho_bm)


@dataclass
class GeneratorPair:
    """Trained legitimate generators plus their shared input scaler.

    ``sign`` publicly aligns the two outputs: the absolute-correlation
    loss is indifferent to a global flip between the parties, but key
    bits are not, so the flip observed on validation data is recorded
    and applied to one side.  It reveals nothing about feature values.
    """

    gen_a: Mlp
    gen_b: Mlp
    scaler: FeatureScaler
    sign: float = 1.0

    def features(self, ds):
        f_a, _ = mlp_forward(self.gen_a, self.scaler.apply(generator_inputs(ds, "a")))
        f_b, _ = mlp_forward(self.gen_b, self.scaler.apply(generator_inputs(ds, "b")))
        return f_a, self.sign * f_b

    def preactivations(self, ds):
        """Output-neuron inputs before the final sine, per party."""
        out = []
        for model, party in ((self.gen_a, "a"), (self.gen_b, "b")):
            x = self.scaler.apply(generator_inputs(ds, party))
            _, (_, preacts) = mlp_forward(model, x)
            out.append(preacts[-1][:, 0])
        return out


@dataclass
class AdversarialResult:
    generators: GeneratorPair
    adversary: Mlp
    adv_scaler: FeatureScaler
    log: TrainLog

    def adversary_features(self, ds):
        f_m, _ = mlp_forward(self.adversary, self.adv_scaler.apply(adversary_inputs(ds)))
        return f_m


def _check_finite(value, epoch, what):
    if not np.all(np.isfinite(value)):
        raise TrainingDiverged(f"{what} became non-finite at epoch {epoch}")


def train_adversarial(dataset, cfg, rng):
    """Joint training of the generator pair against the emulated adversary.

    Each epoch samples one batch, runs all three networks, updates the
    adversary on its tracking loss with frozen generators, then updates
    the generators on the trade-off loss against the adversary features
    computed before the adversary step.  Updates never touch the other
    side's parameters.
    """
    train = dataset.split("train")
    xa_all = generator_inputs(train, "a")
    xb_all = generator_inputs(train, "b")
    xm_all = adversary_inputs(train)
    scaler_gen = FeatureScaler.fit(np.vstack([xa_all, xb_all]))
    scaler_adv = FeatureScaler.fit(xm_all)
    xa_all = scaler_gen.apply(xa_all)
    xb_all = scaler_gen.apply(xb_all)
    xm_all = scaler_adv.apply(xm_all)

    gen_a = init_mlp(list(cfg.gen_dims), rng)
    gen_b = init_mlp(list(cfg.gen_dims), rng)
    adv = init_mlp(list(cfg.adv_dims), rng)
    st_a = init_adam(_flat_params(gen_a))
    st_b = init_adam(_flat_params(gen_b))
    st_m = init_adam(_flat_params(adv))

    n_train = xa_all.shape[0]
    e = cfg.max_epochs
    log = TrainLog(np.arange(e), np.empty(e), np.empty(e),
                   np.empty(e), np.empty(e), np.empty(e))

    mse_mode = cfg.loss_kind == "mse_adversarial"
    lam = 0.0 if cfg.loss_kind == "corr_only" else cfg.lambda_tradeoff

    for epoch in range(e):
        if cfg.adv_restart_every and epoch and epoch % cfg.adv_restart_every == 0:
            adv = init_mlp(list(cfg.adv_dims), rng)
            st_m = init_adam(_flat_params(adv))
        idx = rng.integers(0, n_train, cfg.batch_size)
        f_a, cache_a = mlp_forward(gen_a, xa_all[idx])
        f_b, cache_b = mlp_forward(gen_b, xb_all[idx])
        f_m, cache_m = mlp_forward(adv, xm_all[idx])
        _check_finite(f_a, epoch, "generator features")
        _check_finite(f_b, epoch, "generator features")
        _check_finite(f_m, epoch, "adversary features")

        adv_res = adversary_loss(f_a, f_b, f_m)
        gw, gb = mlp_backward(adv, cache_m, adv_res.d_fm)
        adam_step(st_m, _flat_params(adv), _flat_grads(gw, gb),
                  cfg.learning_rate * cfg.adv_lr_scale)

        if mse_mode:
            gen_res = mse_adversarial_loss(f_a, f_b, f_m, lam)
        else:
            gen_res = generator_loss(f_a, f_b, f_m, lam)
        gw, gb = mlp_backward(gen_a, cache_a, gen_res.d_fa)
        adam_step(st_a, _flat_params(gen_a), _flat_grads(gw, gb), cfg.learning_rate)
        gw, gb = mlp_backward(gen_b, cache_b, gen_res.d_fb)
        adam_step(st_b, _flat_params(gen_b), _flat_grads(gw, gb), cfg.learning_rate)

        _check_finite(gen_res.loss, epoch, "generator loss")
        _check_finite(adv_res.loss, epoch, "adversary loss")
        log.loss_gen[epoch] = gen_res.loss
        log.loss_adv[epoch] = adv_res.loss
        log.rho_ab[epoch] = gen_res.rho_ab
        log.rho_am[epoch] = gen_res.rho_am
        log.rho_bm[epoch] = gen_res.rho_bm

    pair = GeneratorPair(gen_a, gen_b, scaler_gen)
    val = dataset.split("val")
    f_a, f_b = pair.features(val)
    rho, _, _, ok = _corr_grad(f_a, f_b)
    if ok and rho < 0:
        pair.sign = -1.0
    return AdversarialResult(
        generators=pair, adversary=adv, adv_scaler=scaler_adv, log=log,
    )


@dataclass
class EveLog:
    epoch: np.ndarray
    loss: np.ndarray
    rho_ea: np.ndarray
    rho_eb: np.ndarray


@dataclass
class EveResult:
    """Trained eavesdropper with her own sign convention.

    The attacker measures the sign of her correlation on her simulated
    labels and flips her output accordingly, so anti-correlation never
    masquerades as secrecy in downstream key metrics.
    """

    eve: Mlp
    scaler: FeatureScaler
    log: EveLog
    sign: float = 1.0

    def features(self, ds):
        f_e, _ = mlp_forward(self.eve, self.scaler.apply(adversary_inputs(ds)))
        return self.sign * f_e


def train_eve(eve_dataset, label_fn, cfg, rng, eve_dims=None):
    """Supervised training of the worst-case surface eavesdropper.

    The attacker owns the system model, so she simulates her own probe
    rounds (``eve_dataset``) and labels them with the published generator
    (``label_fn`` maps a dataset to the (f_a, f_b) the real parties would
    emit).  The network then maximizes absolute correlation between its
    output and both labels.
    """
    dims = list(eve_dims if eve_dims is not None else cfg.adv_dims)
    train = eve_dataset.split("train")
    f_a, f_b = label_fn(train)
    xm_all = adversary_inputs(train)
    scaler = FeatureScaler.fit(xm_all)
    xm_all = scaler.apply(xm_all)

    eve = init_mlp(dims, rng)
    st = init_adam(_flat_params(eve))

    e = cfg.max_epochs
    log = EveLog(np.arange(e), np.empty(e), np.empty(e), np.empty(e))
    n_train = xm_all.shape[0]
    for epoch in range(e):
        idx = rng.integers(0, n_train, cfg.batch_size)
        f_e, cache = mlp_forward(eve, xm_all[idx])
        _check_finite(f_e, epoch, "eavesdropper features")
        res = adversary_loss(f_a[idx], f_b[idx], f_e)
        gw, gb = mlp_backward(eve, cache, res.d_fm)
        adam_step(st, _flat_params(eve), _flat_grads(gw, gb), cfg.learning_rate)
        _check_finite(res.loss, epoch, "eavesdropper loss")
        log.loss[epoch] = res.loss
        log.rho_ea[epoch] = res.rho_am
        log.rho_eb[epoch] = res.rho_bm

    result = EveResult(eve=eve, scaler=scaler, log=log)
    val = eve_dataset.split("val")
    fa_val, _ = label_fn(val)
    fe_val = result.features(val)
    rho, _, _, ok = _corr_grad(fa_val, fe_val)
    if ok and rho < 0:
        result.sign = -1.0
    return result


# ---------------------------------------------------------------------------
# persistence: versioned text format, bit-exact round trip
# ---------------------------------------------------------------------------

def save_mlp(model, path):
    """Plain-text model file; floats use shortest round-trip formatting."""
    with open(path, "w") as fh:
        fh.write(f"mlpv1 {model.num_layers}\n")
        for w, b, act in zip(model.weights, model.biases, model.activations):
            d_in, d_out = w.shape
            fh.write(f"dims {d_in} {d_out} {act}\n")
            for row in w:
                fh.write(" ".join(repr(v) for v in row.tolist()) + "\n")
            fh.write(" ".join(repr(v) for v in b.tolist()) + "\n")


def load_mlp(path):
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 2 or head[0] != "mlpv1":
            raise ValueError("not an mlpv1 model file")
        num_layers = int(head[1])
        weights, biases, acts = [], [], []
        for _ in range(num_layers):
            tag, d_in, d_out, act = fh.readline().split()
            if tag != "dims":
                raise ValueError("malformed layer header")
            d_in, d_out = int(d_in), int(d_out)
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
            w = np.array([[float(v) for v in fh.readline().split()]
                          for _ in range(d_in)])
            b = np.array([float(v) for v in fh.readline().split()])
            if w.shape != (d_in, d_out) or b.shape != (d_out,):
                raise ValueError("layer payload does not match dims")
            weights.append(w)
            biases.append(b)
            acts.append(act)
    return Mlp(weights, biases, acts)


def save_scaler(scaler, path):
    with open(path, "w") as fh:
        fh.write(f"scalerv1 {scaler.mean.size}\n")
        for mu, sd in zip(scaler.mean.tolist(), scaler.std.tolist()):
            fh.write(f"{mu!r} {sd!r}\n")


def load_scaler(path):
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 2 or head[0] != "scalerv1":
            raise ValueError("not a scalerv1 file")
        n = int(head[1])
        rows = [fh.readline().split() for _ in range(n)]
    mean = np.array([float(r[0]) for r in rows])
    std = np.array([float(r[1]) for r in rows])
    return FeatureScaler(mean=mean, std=std)
