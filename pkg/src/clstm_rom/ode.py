"""Ground-truth trajectories: RK4, the two parametric ODEs and a
high-dimensional periodic surrogate with a swing-in transient."""

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from ._accel import njit
from .linalg import ContractError


class DivergenceError(ArithmeticError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class Trajectory:
    """States stored column-per-time-step, shape (z, T)."""

    theta: np.ndarray
    dt: float
    states: np.ndarray

    def __post_init__(self):
        if self.dt <= 0:
            raise ContractError("dt must be positive")
        if self.states.ndim != 2 or self.states.shape[1] < 1:
            raise ContractError("states must be (z, T) with T >= 1")

    @property
    def z(self):
        return self.states.shape[0]

    @property
    def length(self):
        return self.states.shape[1]

    @property
    def times(self):
        return np.arange(self.length) * self.dt


@njit
def duffing_rhs(x, a):
    return np.array([x[1], x[0] - a * x[0] ** 3])


@njit
def predator_prey_rhs(x, a):
    return np.array([x[0] * (1.0 - x[0]) - x[0] * x[1], -x[1] + a * x[0] * x[1]])


@dataclass(frozen=True)
class OdeSystem:
    name: str
    z: int
    rhs: object
    x0: tuple
    dt: float = 0.01


SYSTEMS = {
    "duffing": OdeSystem("duffing", 2, duffing_rhs, (1.5, 0.0)),
    "predator_prey": OdeSystem("predator_prey", 2, predator_prey_rhs, (0.5, 0.5)),
}


def duffing_energy(r, v, a):
    return 0.5 * v * v - 0.5 * r * r + 0.25 * a * r ** 4


def rk4_integrate(system, theta, x0=None, dt=None, steps=10_000):
    """Classical fixed-step RK4; returns ``steps + 1`` states including x0."""
    x0 = np.array(system.x0 if x0 is None else x0, dtype=np.float64)
    dt = system.dt if dt is None else float(dt)
    if dt <= 0 or steps < 1:
        raise ContractError("need dt > 0 and steps >= 1")
    if not np.all(np.isfinite(x0)):
        raise ContractError("initial state must be finite")
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    out, bad = kernels.rk4_loop(system.rhs, float(theta[0]), x0, dt, int(steps))
    if bad >= 0:
        raise DivergenceError(f"{system.name}: non-finite state at step {bad}", bad)
    return Trajectory(theta=theta, dt=dt, states=np.ascontiguousarray(out.T))


def subsample(traj, stride):
    if stride < 1:
        raise ContractError("stride must be >= 1")
    return replace(traj, dt=traj.dt * stride, states=np.ascontiguousarray(traj.states[:, ::stride]))


# --------------------------------------------------------------------------
# surrogate for a cavity-type flow


@dataclass(frozen=True)
class SurrogateSpec:
    """Shape of the synthetic snapshot family.

    The field has ``blocks`` row blocks (velocity components).  Each block
    carries ``periodic_modes`` standing waves whose base angular frequency is
    ``omega0 + omega_slope * (theta - theta_ref)``; mode j oscillates at
    ``(j + 1)`` times that with amplitude ``decay ** j``.  ``transient_modes``
    extra spatial patterns decay with time constant ``swing_in_steps / 6``
    and the periodic part ramps up over the same window.  ``fluctuation_modes``
    add small incommensurate oscillations of amplitude
    ``fluctuation_amplitude`` that carry little energy.
    """

    n: int = 200
    blocks: int = 2
    periodic_modes: int = 3
    transient_modes: int = 3
    fluctuation_modes: int = 0
    fluctuation_amplitude: float = 0.0
    amplitude: float = 1.0
    decay: float = 0.6
    omega0: float = 1.0
    omega_slope: float = 0.5
    theta_ref: float = 0.0
    noise: float = 0.0
    bank_seed: int = 1234

    @property
    def modes_per_block(self):
        return self.periodic_modes + self.transient_modes + self.fluctuation_modes

    def frequency(self, theta):
        return self.omega0 + self.omega_slope * (theta - self.theta_ref)


def _mode_bank(spec):
    rng = np.random.default_rng(spec.bank_seed)
    rows = spec.n // spec.blocks
    need = spec.modes_per_block
    if need > rows:
        raise ContractError("block too small for the requested mode count")
    banks = []
    for _ in range(spec.blocks):
        q, _ = np.linalg.qr(rng.standard_normal((rows, need)))
        banks.append(q)
    phases = rng.uniform(0, 2 * np.pi, size=(spec.blocks, need))
    fluct_freq = rng.uniform(2.0, 6.0, size=(spec.blocks, max(spec.fluctuation_modes, 1)))
    return banks, phases, fluct_freq


def synth_cavity_like(spec, theta, dt, steps, swing_in_steps):
    """Deterministic (n, steps) snapshot trajectory for parameter ``theta``."""
    if steps < 1:
        raise ContractError("steps must be >= 1")
    if swing_in_steps < 0:
        raise ContractError("swing_in_steps must be >= 0")
    if spec.n % spec.blocks:
        raise ContractError("n must split evenly into blocks")
    theta = float(np.atleast_1d(theta)[0])
    banks, phases, fluct_freq = _mode_bank(spec)
    t = np.arange(steps) * dt
    omega = spec.frequency(theta)
    if swing_in_steps > 0:
        tau = swing_in_steps * dt / 6.0
        envelope = np.exp(-t / tau)
    else:
        envelope = np.zeros_like(t)
    ramp = 1.0 - 0.5 * envelope
    P, R = spec.periodic_modes, spec.transient_modes
    blocks = []
    for b, bank in enumerate(banks):
        coeffs = np.zeros((spec.modes_per_block, steps))
        for j in range(P):
            coeffs[j] = spec.decay ** j * np.sin((j + 1) * omega * t + phases[b, j]) * ramp
        for j in range(R):
            # drifting non-periodic swing-in shapes
            coeffs[P + j] = (0.8 / (j + 1)) * envelope * np.cos((0.3 + 0.2 * j) * omega * t + phases[b, P + j])
        for j in range(spec.fluctuation_modes):
            coeffs[P + R + j] = spec.fluctuation_amplitude * np.sin(
                fluct_freq[b, j] * (1.0 + 0.1 * theta) * t + phases[b, P + R + j])
        blocks.append(bank @ coeffs)
    states = spec.amplitude * np.vstack(blocks)
    if spec.noise:
        rng = np.random.default_rng([spec.bank_seed, int(np.float64(theta).view(np.uint64))])
        states = states + spec.noise * rng.standard_normal(states.shape)
    return Trajectory(theta=np.array([theta]), dt=dt, states=states)


def trajectory_to_csv(path, traj):
    data = np.column_stack([traj.times, traj.states.T])
    with open(path, "w", newline="\n") as fh:
        fh.write("# theta=" + ",".join(repr(float(v)) for v in traj.theta) + f" dt={traj.dt!r}\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def trajectory_from_csv(path):
    with open(path) as fh:
        header = fh.readline()
    if not header.startswith("# theta="):
        raise ContractError(f"{path}: missing trajectory header")
    theta_part, dt_part = header[2:].split()
    theta = np.array([float(v) for v in theta_part.split("=", 1)[1].split(",")])
    dt = float(dt_part.split("=", 1)[1])
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return Trajectory(theta=theta, dt=dt, states=np.ascontiguousarray(data[:, 1:].T))
