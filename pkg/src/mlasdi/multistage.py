"""Multi-stage training: joint stage-1 learning and residual decoders.

Stage 1 trains an autoencoder jointly with per-parameter latent ODE
coefficients under

    loss = sum((U - dec(enc(U)))^2) + beta1 * dynamics_mismatch
           + beta2 * sum(xi^2).

Later stages freeze everything trained so far, roll the latent ODEs out
from the encoded initial conditions, and fit one new decoder per stage to
the normalized residual of the composed prediction.  The composed model is

    U ~ dec_1(zhat) + eps_1 * dec_2(zhat) + eps_2 * dec_3(zhat) + ...

where every stage decodes the identical rolled-out latent trajectories and
eps_k is the population standard deviation of the stage-k residual.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import di_loss, rk4_rollout, xi_to_ba
from .errors import (
    DivergenceError,
    OrderingError,
    ShapeError,
    ValidationError,
)
from .gp import CoefficientGps
from .nets import (
    MlpNetwork,
    backward,
    forward,
    forward_with_cache,
    hidden_activations,
    init_network,
)
from .optim import AdamState, adam_step

log = logging.getLogger("mlasdi.multistage")

EPSILON_FLOOR = 1e-12


@dataclass
class TrainConfig:
    """Hyperparameters for a full multi-stage run.

    ``hidden`` holds one tuple of hidden-layer widths per stage ("500-50"
    style architectures become (500, 50)); ``iterations`` one count per
    stage.
    """

    latent_dim: int
    hidden: tuple
    iterations: tuple
    beta1: float = 0.1
    beta2: float = 0.001
    lr: float = 1e-3
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        self.hidden = tuple(tuple(int(w) for w in h) for h in self.hidden)
        self.iterations = tuple(int(n) for n in self.iterations)
        if self.latent_dim < 1:
            raise ValidationError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if not self.iterations:
            raise ValidationError("need at least one training stage")
        if any(n < 0 for n in self.iterations):
            raise ValidationError(f"iteration counts must be >= 0, got {self.iterations}")
        if len(self.hidden) != len(self.iterations):
            raise ValidationError(
                f"{len(self.iterations)} stages need {len(self.iterations)} hidden "
                f"specs, got {len(self.hidden)}"
            )
        if any(w < 1 for h in self.hidden for w in h):
            raise ValidationError(f"hidden widths must be positive, got {self.hidden}")
        if self.beta1 < 0 or self.beta2 < 0:
            raise ValidationError("loss weights beta1/beta2 must be >= 0")
        if self.lr <= 0:
            raise ValidationError(f"learning rate must be positive, got {self.lr}")
        if self.threads < 1:
            raise ValidationError(f"threads must be >= 1, got {self.threads}")

    @property
    def n_stages(self):
        return len(self.iterations)


@dataclass
class StageStack:
    """A trained model: stage-1 autoencoder + coefficients + GPs, then
    ordered (residual decoder, epsilon) pairs."""

    encoder: MlpNetwork
    decoder1: MlpNetwork
    xi: np.ndarray
    gps: CoefficientGps
    config: TrainConfig
    residual_stages: list = field(default_factory=list)
    train_seconds: list = field(default_factory=list)

    @property
    def n_stages(self):
        return 1 + len(self.residual_stages)

    @property
    def state_dim(self):
        return self.decoder1.output_dim

    @property
    def latent_dim(self):
        return self.encoder.output_dim

    def decoder(self, stage):
        """Decoder for a 1-based stage index."""
        if stage == 1:
            return self.decoder1
        if 2 <= stage <= self.n_stages:
            return self.residual_stages[stage - 2][0]
        raise OrderingError(
            f"stage {stage} out of range; trained stages: 1..{self.n_stages}"
        )

    @property
    def parameter_count(self):
        nets = [self.encoder, self.decoder1] + [d for d, _ in self.residual_stages]
        return sum(net.parameter_count for net in nets) + self.xi.size


def combine_stage1_loss(l_ae, l_di, xi_sq, beta1, beta2):
    """Weighted total of the three stage-1 loss components."""
    return l_ae + beta1 * l_di + beta2 * xi_sq


def stage1_loss(values, encoder, decoder, xi, dt, beta1, beta2):
    """Stage-1 loss and exact gradients for encoder, decoder and xi.

    ``values`` is the (P, T, Nu) training tensor.  Returns
    (total, parts, grads) with parts = {"l_ae", "l_di", "xi_sq"} and grads =
    (enc_w, enc_b, dec_w, dec_b, xi_grad).
    """
    p, t, nu = values.shape
    if encoder.input_dim != nu:
        raise ShapeError(
            f"encoder expects inputs of width {encoder.input_dim}, data has {nu}"
        )
    if decoder.output_dim != nu:
        raise ShapeError(
            f"decoder produces width {decoder.output_dim}, data has {nu}"
        )
    x = values.reshape(p * t, nu)
    z_flat, enc_cache = forward_with_cache(encoder, x)
    uhat, dec_cache = forward_with_cache(decoder, z_flat)
    diff = uhat - x
    l_ae = float((diff * diff).sum())
    nz = encoder.output_dim
    z = z_flat.reshape(p, t, nz)
    l_di, gz_di, gxi_di = di_loss(z, xi, dt)
    xi_sq = float((xi * xi).sum())
    total = combine_stage1_loss(l_ae, l_di, xi_sq, beta1, beta2)
    if not np.isfinite(total):
        raise DivergenceError(
            f"non-finite stage-1 loss (l_ae={l_ae}, l_di={l_di}, xi_sq={xi_sq})"
        )
    dec_w, dec_b, gz_ae = backward(decoder, z_flat, 2.0 * diff, dec_cache)
    gz = gz_ae + beta1 * gz_di.reshape(p * t, nz)
    enc_w, enc_b, _ = backward(encoder, x, gz, enc_cache)
    gxi = beta1 * gxi_di + 2.0 * beta2 * xi
    parts = {"l_ae": l_ae, "l_di": l_di, "xi_sq": xi_sq}
    return total, parts, (enc_w, enc_b, dec_w, dec_b, gxi)


def residual_stage_loss(decoder, zhat_flat, target_flat):
    """Residual-decoder loss sum((dec(zhat) - target)^2) and its gradients.

    Returns (loss, weight_grads, bias_grads).
    """
    out, cache = forward_with_cache(decoder, zhat_flat)
    diff = out - target_flat
    loss = float((diff * diff).sum())
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite residual-stage loss {loss}")
    wg, bg, _ = backward(decoder, zhat_flat, 2.0 * diff, cache)
    return loss, wg, bg


def _named_net_params(prefix, net):
    named = []
    for i in range(net.n_layers):
        named.append((f"{prefix}.w{i}", net.weights[i]))
        named.append((f"{prefix}.b{i}", net.biases[i]))
    return named


def _encoder_dims(config, state_dim):
    return (state_dim,) + config.hidden[0] + (config.latent_dim,)

def _decoder_dims(config, stage, state_dim):
    widths = tuple(reversed(config.hidden[stage - 1]))
    return (config.latent_dim,) + widths + (state_dim,)


def train_stage1(values, dt, config):
    """Full-batch Adam on the stage-1 joint loss; deterministic under seed.

    Returns (encoder, decoder, xi, trace) where trace holds the loss at the
    start of every iteration.  A zero-iteration config returns the seeded
    initialization unchanged.
    """
    p, t, nu = values.shape
    rng = np.random.default_rng([config.seed, 1])
    enc_dims = _encoder_dims(config, nu)
    dec_dims = _decoder_dims(config, 1, nu)
    encoder = init_network(enc_dims, hidden_activations(len(enc_dims) - 1), rng)
    decoder = init_network(dec_dims, hidden_activations(len(dec_dims) - 1), rng)
    nz = config.latent_dim
    xi = np.zeros((p, nz + 1, nz))
    named = (
        _named_net_params("encoder", encoder)
        + _named_net_params("decoder1", decoder)
        + [("xi", xi)]
    )
    state = AdamState.create(named, lr=config.lr)
    params = [arr for _, arr in named]
    n_iter = config.iterations[0]
    trace = np.empty(n_iter)
    for it in range(n_iter):
        try:
            total, _, grads = stage1_loss(
                values, encoder, decoder, xi, dt, config.beta1, config.beta2
            )
        except DivergenceError as exc:
            raise DivergenceError(f"stage 1 iteration {it}: {exc}") from exc
        trace[it] = total
        # interleave to match (w0, b0, w1, b1, ...) block order
        enc_w, enc_b, dec_w, dec_b, gxi = grads
        flat_grads = []
        for gw, gb in zip(enc_w, enc_b):
            flat_grads.extend((gw, gb))
        for gw, gb in zip(dec_w, dec_b):
            flat_grads.extend((gw, gb))
        flat_grads.append(gxi)
        adam_step(params, flat_grads, state)
        if it % 500 == 0:
            log.debug("stage 1 iter %d: loss %.6e", it, total)
    return encoder, decoder, xi, trace


def latent_sindy_trajectories(encoder, xi, values, dt):
    """Latent ODE rollouts from encoded initial conditions, one per parameter.

    Every later stage decodes exactly this tensor; it is a deterministic
    function of the stage-1 model and the data.
    """
    p, t, _ = values.shape
    z0 = forward(encoder, values[:, 0, :])
    nz = encoder.output_dim
    zhat = np.empty((p, t, nz))
    for i in range(p):
        b, a = xi_to_ba(xi[i])
        zhat[i] = rk4_rollout(b, a, z0[i], dt, t - 1)
    return zhat


def sindy_reconstruct(stack, stage, zhat):
    """Decode rolled-out latent trajectories through one stage's decoder.

    ``zhat`` is (P, T, Nz); the result is (P, T, Nu).  Stage indices are
    1-based; later stages return the normalized residual approximation
    (their output is scaled by epsilon only inside the composition).
    """
    dec = stack.decoder(stage)
    p, t, nz = zhat.shape
    out = forward(dec, zhat.reshape(p * t, nz))
    return out.reshape(p, t, dec.output_dim)


def compose_prediction(stack, zhat, cutoff=None):
    """Composed reconstruction through ``cutoff`` stages (default: all)."""
    cutoff = stack.n_stages if cutoff is None else int(cutoff)
    if cutoff < 1 or cutoff > stack.n_stages:
        raise OrderingError(
            f"stage cutoff {cutoff} unavailable; trained stages: 1..{stack.n_stages}"
        )
    pred = sindy_reconstruct(stack, 1, zhat)
    for stage in range(2, cutoff + 1):
        eps = stack.residual_stages[stage - 2][1]
        pred = pred + eps * sindy_reconstruct(stack, stage, zhat)
    return pred


def compute_residual(values, partial):
    """Residual and its normalization: R = values - partial, eps = std(R).

    ``eps`` is the population standard deviation over all elements, floored
    at 1e-12 so a perfect reconstruction cannot divide by zero.
    """
    if values.shape != partial.shape:
        raise ShapeError(
            f"residual shapes differ: data {values.shape} vs prediction "
            f"{partial.shape}"
        )
    r = values - partial
    eps = max(float(r.std()), EPSILON_FLOOR)
    return r, eps


def train_stage_k(stack, values, dt, stage):
    """Train the stage-k residual decoder (k >= 2) on frozen earlier stages.

    The regression input is the fixed stage-1 latent rollout; the target is
    the previous composed residual normalized to unit standard deviation.
    The new decoder uses sine activation on its first hidden layer and tanh
    on any later hidden layers.  Appends to and returns the stack.
    """
    if stage < 2:
        raise OrderingError(f"residual stages start at 2, got {stage}")
    if stage != stack.n_stages + 1:
        raise OrderingError(
            f"cannot train stage {stage}: stages 1..{stack.n_stages} are trained; "
            f"next is {stack.n_stages + 1}"
        )
    config = stack.config
    if stage > config.n_stages:
        raise OrderingError(
            f"config defines {config.n_stages} stages, cannot train stage {stage}"
        )
    p, t, nu = values.shape
    zhat = latent_sindy_trajectories(stack.encoder, stack.xi, values, dt)
    partial = compose_prediction(stack, zhat)
    residual, eps = compute_residual(values, partial)
    target = (residual / eps).reshape(p * t, nu)
    zhat_flat = zhat.reshape(p * t, stack.latent_dim)

    dec_dims = _decoder_dims(config, stage, nu)
    rng = np.random.default_rng([config.seed, stage])
    decoder = init_network(
        dec_dims, hidden_activations(len(dec_dims) - 1, first_hidden="sine"), rng
    )
    named = _named_net_params(f"decoder{stage}", decoder)
    params = [arr for _, arr in named]
    state = AdamState.create(named, lr=config.lr)
    n_iter = config.iterations[stage - 1]
    trace = np.empty(n_iter)
    for it in range(n_iter):
        try:
            loss, wg, bg = residual_stage_loss(decoder, zhat_flat, target)
        except DivergenceError as exc:
            raise DivergenceError(f"stage {stage} iteration {it}: {exc}") from exc
        trace[it] = loss
        flat_grads = []
        for gw, gb in zip(wg, bg):
            flat_grads.extend((gw, gb))
        adam_step(params, flat_grads, state)
        if it % 500 == 0:
            log.debug("stage %d iter %d: loss %.6e", stage, it, loss)
    stack.residual_stages.append((decoder, eps))
    return decoder, eps, trace


def predict(stack, mu, u0, n_steps, dt, stage_cutoff=None):
    """Predict a full trajectory at parameter ``mu`` from its initial state.

    The latent initial condition is the encoded ``u0``; coefficients come
    from the GP predictive means; all stages decode the same rollout.
    Returns an (n_steps + 1, Nu) array.
    """
    cutoff = stack.n_stages if stage_cutoff is None else int(stage_cutoff)
    if cutoff < 1 or cutoff > stack.n_stages:
        raise OrderingError(
            f"stage cutoff {cutoff} unavailable; trained stages: 1..{stack.n_stages}"
        )
    if stack.gps is None:
        raise ValidationError("coefficient GPs are not fitted; cannot predict")
    u0 = np.ascontiguousarray(u0, dtype=np.float64).reshape(-1)
    if u0.shape[0] != stack.encoder.input_dim:
        raise ShapeError(
            f"initial state has {u0.shape[0]} entries, encoder expects "
            f"{stack.encoder.input_dim}"
        )
    z0 = forward(stack.encoder, u0[None, :])[0]
    b, a, _, _ = stack.gps.interpolate(mu)
    zhat = rk4_rollout(b, a, z0, dt, n_steps)
    pred = forward(stack.decoder1, zhat)
    for dec, eps in stack.residual_stages[: cutoff - 1]:
        pred = pred + eps * forward(dec, zhat)
    return pred


@dataclass
class TrainResult:
    stack: StageStack
    traces: list
    seconds: list


def train_full(train_data, config, n_stages=None, stack=None):
    """Train stages sequentially on a SnapshotTensor; resumable.

    With ``stack`` given, already-trained stages are kept bit-identical and
    only the missing ones run.  GPs are fitted once, after stage 1.
    Returns a TrainResult whose ``seconds`` cover only the stages run here.
    """
    n_stages = config.n_stages if n_stages is None else int(n_stages)
    if n_stages < 1 or n_stages > config.n_stages:
        raise ValidationError(
            f"requested {n_stages} stages but config defines {config.n_stages}"
        )
    values, dt = train_data.values, train_data.dt
    traces = []
    seconds = []
    if stack is None:
        t0 = time.perf_counter()
        encoder, decoder, xi, trace = train_stage1(values, dt, config)
        gps = CoefficientGps.fit(
            train_data.params, xi, seed=config.seed, threads=config.threads
        )
        stack = StageStack(encoder, decoder, xi, gps, config)
        seconds.append(time.perf_counter() - t0)
        traces.append(trace)
        stack.train_seconds.append(seconds[-1])
        log.info("stage 1 trained in %.2fs", seconds[-1])
    else:
        if stack.config != config:
            raise ValidationError(
                "resume checkpoint was trained with a different configuration"
            )
        if stack.n_stages >= n_stages:
            raise ValidationError(
                f"checkpoint already has {stack.n_stages} stages; nothing to resume "
                f"for a {n_stages}-stage run"
            )
    for stage in range(stack.n_stages + 1, n_stages + 1):
        t0 = time.perf_counter()
        _, _, trace = train_stage_k(stack, values, dt, stage)
        seconds.append(time.perf_counter() - t0)
        traces.append(trace)
        stack.train_seconds.append(seconds[-1])
        log.info("stage %d trained in %.2fs", stage, seconds[-1])
    return TrainResult(stack, traces, seconds)
