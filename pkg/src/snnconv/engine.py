"""Time-stepped integrate-and-fire engine and the ANN conversion mapping.

A converted network is organized as *stages*: each stage is the chain of
linear layers (pool/flatten plus one weighted layer) feeding a bank of IF
neurons, and the last stage is the non-spiking classifier readout.  Inputs
use direct coding: the analog sample is presented as a constant current at
every time-step, so the stage-0 average input equals the sample itself.

IF dynamics per step (reset by subtraction):

    u = v + current;  s = [u >= theta];  v = u - theta * s

A neuron fires exactly at threshold (the step function is 1 at 0), which
keeps the spike count of a constant-current neuron equal to the floor-based
closed form in :func:`even_timing_phi` at grid boundaries.

Membrane potentials are never clamped: a negative residual after the run is
precisely the signal the two-stage masking inference uses.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConversionError, ParameterError, ShapeError
from .network import NetworkSpec, layer_forward
from .activation import qcfs


@dataclass
class Stage:
    """A chain of linear layers ending in IF neurons (theta set) or the
    readout (theta None)."""

    layers: list
    theta: float | None = None

    def apply(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer_forward(layer, x)
        return x


@dataclass
class SnnNetwork:
    """Converted spiking network; weights are shared with the source ANN."""

    stages: list
    quant_steps: int
    input_shape: tuple
    normalization: tuple | None = None

    @property
    def if_stages(self) -> list:
        return self.stages[:-1]

    @property
    def thetas(self) -> list:
        return [s.theta for s in self.if_stages]

    def stage_linear(self, index: int, x: np.ndarray) -> np.ndarray:
        """Apply stage ``index``'s linear chain (bias included) once."""
        return self.stages[index].apply(x)


@dataclass
class ConversionReport:
    """Per-stage mapping produced by :func:`convert`."""

    thetas: list
    v_init: list
    source_lams: list
    timesteps: int | None = None
    tau: int | None = None


def convert(net: NetworkSpec) -> SnnNetwork:
    """Map a quantized-activation ANN onto an IF spiking network.

    Weights and biases are reused verbatim; each activation threshold
    becomes the firing threshold of its stage and the initial membrane
    potential is half of it.  Biases act as a constant per-step current
    because they sit inside the stage's linear chain.
    """
    stages = []
    pending = []
    for layer in net.layers:
        pending.append(layer)
        if layer.kind in ("dense", "conv2d"):
            if layer.has_activation:
                stages.append(Stage(pending, theta=layer.lam))
                pending = []
    if pending:
        stages.append(Stage(pending, theta=None))
    else:
        raise ConversionError("network has no classifier stage after the last activation")
    for stage in stages[:-1]:
        if stage.theta is None:
            raise ConversionError("activation layer without a threshold cannot be converted")
    return SnnNetwork(stages, net.quant_steps, net.input_shape, net.normalization)


def conversion_report(snn: SnnNetwork, timesteps: int | None = None,
                      tau: int | None = None) -> ConversionReport:
    thetas = snn.thetas
    return ConversionReport(
        thetas=list(thetas),
        v_init=[0.5 * t for t in thetas],
        source_lams=list(thetas),
        timesteps=timesteps,
        tau=tau,
    )


# ---------------------------------------------------------------------------
# state and single-step dynamics


@dataclass
class IfState:
    """State of one IF stage across a batch."""

    theta: float
    v: np.ndarray
    spike_count: np.ndarray
    mask: np.ndarray | None = None
    t: int = 0

    @classmethod
    def initial(cls, theta: float, shape: tuple) -> "IfState":
        if theta <= 0:
            raise ParameterError(f"firing threshold must be positive, got {theta}")
        return cls(theta=theta, v=np.full(shape, 0.5 * theta),
                   spike_count=np.zeros(shape, dtype=np.int64))

    def reset(self) -> None:
        """Back to the initial potential theta/2 with counters cleared."""
        self.v = np.full_like(self.v, 0.5 * self.theta)
        self.spike_count = np.zeros_like(self.spike_count)
        self.t = 0


def snn_step(state: IfState, current: np.ndarray) -> np.ndarray:
    """Advance one stage by a single time-step.

    Returns the emitted binary spikes (float 0/1).  If a mask is set, the
    emitted output is gated by it; the membrane itself still integrates and
    resets on its own firings, only the transmitted spike is suppressed.
    """
    u = state.v + current
    fired = u >= state.theta
    state.v = u - state.theta * fired
    emitted = fired.astype(np.float64)
    if state.mask is not None:
        emitted = emitted * state.mask
    state.spike_count += emitted.astype(np.int64)
    state.t += 1
    return emitted


@dataclass
class SimResult:
    """Outputs of a simulation run.

    ``phi`` is the average postsynaptic potential per stage,
    ``theta * emitted_count / T``; ``scores`` is the time-averaged
    pre-activation input to the classifier stage.
    """

    scores: np.ndarray
    phi: list
    v_final: list
    spikes: list | None = None
    masks: list | None = None


class TraceRecorder:
    """Collects per-step (stage, neuron, t, u, s, v) rows for debugging."""

    def __init__(self):
        self.rows = []

    def record(self, stage: int, t: int, u: np.ndarray, s: np.ndarray, v: np.ndarray) -> None:
        flat_u, flat_s, flat_v = (np.ravel(a) for a in (u, s, v))
        for neuron in range(flat_u.size):
            self.rows.append((stage, neuron, t, flat_u[neuron], flat_s[neuron], flat_v[neuron]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["layer", "neuron", "t", "u", "s", "v"])
            writer.writerows(self.rows)


def init_states(snn: SnnNetwork, batch: int) -> list:
    """Allocate fresh per-stage states for a batch (shape probe with zeros)."""
    states = []
    probe = np.zeros((batch, *snn.input_shape))
    for stage in snn.if_stages:
        probe = stage.apply(probe)
        states.append(IfState.initial(stage.theta, probe.shape))
        probe = np.zeros_like(probe)
    return states


def _run(snn: SnnNetwork, x: np.ndarray, timesteps: int, states: list,
         record_spikes: bool = False, trace: TraceRecorder | None = None):
    """Core loop shared by plain simulation and masked stage-2 inference."""
    n = x.shape[0]
    spikes = [np.zeros((timesteps, *st.v.shape)) for st in states] if record_spikes else None
    score_sum = None
    for t in range(timesteps):
        cur = x
        for i, (stage, st) in enumerate(zip(snn.if_stages, states)):
            current = stage.apply(cur)
            if trace is not None:
                u = st.v + current
            s = snn_step(st, current)
            if trace is not None:
                trace.record(i, t + 1, u, s, st.v)
            if record_spikes:
                spikes[i][t] = s
            cur = stage.theta * s
        readout = snn.stages[-1].apply(cur)
        score_sum = readout if score_sum is None else score_sum + readout
    scores = score_sum / timesteps
    phi = [st.theta * (st.spike_count / timesteps) for st in states]
    if record_spikes:
        spikes = [np.moveaxis(sp, 0, -1) for sp in spikes]  # (..., T) per stage
    return scores, phi, spikes


def snn_simulate(snn: SnnNetwork, x: np.ndarray, timesteps: int,
                 record_spikes: bool = True, trace: TraceRecorder | None = None) -> SimResult:
    """Simulate with direct coding for the given number of steps."""
    if timesteps < 1:
        raise ParameterError(f"timesteps must be >= 1, got {timesteps}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != snn.input_shape:
        raise ShapeError(f"input shape {x.shape[1:]} does not match network {snn.input_shape}")
    states = init_states(snn, x.shape[0])
    scores, phi, spikes = _run(snn, x, timesteps, states,
                               record_spikes=record_spikes, trace=trace)
    return SimResult(scores=scores, phi=phi,
                     v_final=[st.v for st in states], spikes=spikes)


def srp_inference(snn: SnnNetwork, x: np.ndarray, tau: int, timesteps: int,
                  record_spikes: bool = False) -> SimResult:
    """Two-stage inference with residual-potential masking.

    Stage 1 runs ``tau`` plain steps on the sample; neurons whose residual
    potential ends negative are marked dead.  Potentials are then reset to
    theta/2, and stage 2 runs ``timesteps`` steps with each stage's spike
    output gated by its mask.  Stage-1 spikes are discarded; only the masks
    survive into stage 2.
    """
    if tau < 1:
        raise ParameterError(f"tau must be >= 1, got {tau}")
    if timesteps < 1:
        raise ParameterError(f"timesteps must be >= 1, got {timesteps}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != snn.input_shape:
        raise ShapeError(f"input shape {x.shape[1:]} does not match network {snn.input_shape}")

    states = init_states(snn, x.shape[0])
    _run(snn, x, tau, states)

    masks = [(st.v >= 0.0).astype(np.float64) for st in states]
    for st, mask in zip(states, masks):
        st.reset()
        st.mask = mask

    scores, phi, spikes = _run(snn, x, timesteps, states, record_spikes=record_spikes)
    return SimResult(scores=scores, phi=phi,
                     v_final=[st.v for st in states], spikes=spikes, masks=masks)


# ---------------------------------------------------------------------------
# even-timing (forced) evaluation


def even_timing_phi(y, theta: float, timesteps: int, v0: float):
    """Closed-form stage output when the input current is constant.

    clip(theta/T * floor((y*T + v0) / theta), 0, theta); with T equal to
    the quantization step count and v0 = theta/2 this coincides with the
    quantized activation pointwise.
    """
    if theta <= 0:
        raise ParameterError(f"theta must be positive, got {theta}")
    if timesteps < 1:
        raise ParameterError(f"timesteps must be >= 1, got {timesteps}")
    y = np.asarray(y, dtype=np.float64)
    return np.clip((theta / timesteps) * np.floor((y * timesteps + v0) / theta), 0.0, theta)


def constant_current_phi(current: np.ndarray, theta: float, timesteps: int) -> np.ndarray:
    """Simulate one IF bank fed the same current every step; returns phi.

    This is the simulation-side counterpart of :func:`even_timing_phi` and
    deliberately does not use the closed form.
    """
    state = IfState.initial(theta, np.asarray(current).shape)
    for _ in range(timesteps):
        snn_step(state, current)
    return theta * (state.spike_count / timesteps)


def snn_forced_phi(snn: SnnNetwork, x: np.ndarray, timesteps: int):
    """Evaluate stage by stage with inputs forced even in time.

    Each stage receives the constant current built from the previous
    stage's final average output, which removes all spike-timing effects.
    Returns ``(scores, phi_per_stage)``.
    """
    if timesteps < 1:
        raise ParameterError(f"timesteps must be >= 1, got {timesteps}")
    x = np.asarray(x, dtype=np.float64)
    cur = x
    phis = []
    for stage in snn.if_stages:
        y = stage.apply(cur)
        phi = constant_current_phi(y, stage.theta, timesteps)
        phis.append(phi)
        cur = phi
    scores = snn.stages[-1].apply(cur)
    return scores, phis


def forced_ann_outputs(snn: SnnNetwork, x: np.ndarray):
    """Quantized-activation outputs computed stage-wise on the same chains.

    Uses the identical linear code path as the spiking evaluation so that
    exact-equality comparisons see bitwise-identical pre-activations.
    Returns ``(logits, a_per_stage)``.
    """
    cur = np.asarray(x, dtype=np.float64)
    outs = []
    for stage in snn.if_stages:
        y = stage.apply(cur)
        a = qcfs(y, stage.theta, snn.quant_steps)
        outs.append(a)
        cur = a
    logits = snn.stages[-1].apply(cur)
    return logits, outs
