"""Units, physical constants and validated parameter containers.

Internal unit system: time in microseconds, every energy or frequency as an
angular frequency in rad/us. Quantities labelled ``MHz`` in files and on the
command line are the cycle frequency, i.e. ``value / (2*pi)`` of the internal
number.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources

TWO_PI = 2.0 * math.pi
K_BOLTZMANN = 1.380649e-23  # J/K
RB87_MASS = 87 * 1.66e-27  # kg
K_EFF_COUNTER = TWO_PI / 480.0 - TWO_PI / 780.0  # 1/nm, counter-propagating 480/780 nm beams


def mhz(value: float) -> float:
    """Convert a cycle frequency in MHz to rad/us."""
    return TWO_PI * value


def to_mhz(value: float) -> float:
    """Convert rad/us to a cycle frequency in MHz."""
    return value / TWO_PI


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration, naming the key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class PhysicalParams:
    """Chain size plus dressing-laser and interaction constants.

    Parameters
    ----------
    n_atoms : int
        Number of atoms; must be even and at least 2.
    omega, delta : float
        Two-photon Rabi frequency and (signed) detuning of the dressing
        drive, rad/us.
    c6 : float
        Van der Waals coefficient, rad um^6 / us.
    r0 : float
        Nominal lattice spacing, um.
    interaction_range : int
        Largest ``|i - j|`` kept in the pairwise interaction.
    """

    n_atoms: int = 4
    omega: float = mhz(8.0)
    delta: float = mhz(-4.5)
    c6: float = mhz(858e3)
    r0: float = 5.87
    interaction_range: int = 2

    def __post_init__(self):
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 2 or self.n_atoms % 2:
            raise ConfigError("n_atoms", f"must be an even integer >= 2, got {self.n_atoms}")
        if not self.r0 > 0:
            raise ConfigError("r0_um", f"must be positive, got {self.r0}")
        if not self.c6 > 0:
            raise ConfigError("c6_ghz_um6", f"must be positive, got {self.c6}")
        if int(self.interaction_range) != self.interaction_range or self.interaction_range < 1:
            raise ConfigError("interaction_range", f"must be an integer >= 1, got {self.interaction_range}")

    @property
    def v_nn(self) -> float:
        """Nearest-neighbour interaction C6 / R0^6 in rad/us."""
        return self.c6 / self.r0**6

    def with_v(self, v: float) -> "PhysicalParams":
        """Copy with C6 rescaled so that the nearest-neighbour strength equals `v`."""
        return PhysicalParams(self.n_atoms, self.omega, self.delta, v * self.r0**6, self.r0, self.interaction_range)


def rms_velocity(temperature: float, mass: float = RB87_MASS) -> float:
    """One-dimensional rms thermal velocity sqrt(k_B T / m) in m/s (T in uK)."""
    if temperature < 0:
        raise ValueError(f"temperature must be >= 0 uK, got {temperature}")
    return math.sqrt(K_BOLTZMANN * temperature * 1e-6 / mass)


def derive_sigma_doppler(temperature: float, mass: float = RB87_MASS, k_eff: float = K_EFF_COUNTER) -> float:
    """Standard deviation of the Doppler detuning, rad/us.

    `temperature` in uK, `mass` in kg, `k_eff` in 1/nm.
    """
    # 1/nm * m/s = 1e9 rad/s = 1e3 rad/us
    return abs(k_eff) * rms_velocity(temperature, mass) * 1e3


@dataclass(frozen=True)
class NoiseParams:
    """Thermal-dephasing noise strengths.

    ``sigma_pos`` is the per-atom position standard deviation in um,
    ``temperature`` is in uK; the Doppler spread follows from the temperature.
    """

    sigma_pos: float = 0.1
    temperature: float = 10.0
    atom_mass: float = RB87_MASS
    k_eff: float = K_EFF_COUNTER

    def __post_init__(self):
        if self.sigma_pos < 0:
            raise ConfigError("sigma_pos_um", f"must be >= 0, got {self.sigma_pos}")
        if self.temperature < 0:
            raise ConfigError("temperature_uk", f"must be >= 0, got {self.temperature}")
        if not self.atom_mass > 0:
            raise ConfigError("atom_mass_kg", f"must be positive, got {self.atom_mass}")

    @property
    def sigma_doppler(self) -> float:
        return derive_sigma_doppler(self.temperature, self.atom_mass, self.k_eff)

    @property
    def rms_velocity(self) -> float:
        return rms_velocity(self.temperature, self.atom_mass)


@dataclass(frozen=True)
class DrivePreset:
    """Operating point used for one temperature (V, Delta, microwave cap)."""

    v: float
    delta: float
    omega_mw_max: float
    label: str
    temperature: float | None = None


@dataclass
class RunConfig:
    """Everything a config file can set."""

    params: PhysicalParams = field(default_factory=PhysicalParams)
    noise: NoiseParams = field(default_factory=NoiseParams)
    preset: DrivePreset | None = None
    seed: int = 0

    def __post_init__(self):
        if self.preset is None:
            self.preset = DrivePreset(
                self.params.v_nn, self.params.delta, mhz(0.14), f"{self.noise.temperature:g}uK", self.noise.temperature
            )

    def __iter__(self):
        # allows ``params, noise, preset = load_params(text)``
        return iter((self.params, self.noise, self.preset))


# key -> (unit accepted as an optional suffix, kind)
_KEYS = {
    "n_atoms": (None, int),
    "omega_mhz": ("mhz", float),
    "delta_mhz": ("mhz", float),
    "c6_ghz_um6": ("ghz_um6", float),
    "r0_um": ("um", float),
    "v_mhz": ("mhz", float),
    "interaction_range": (None, int),
    "sigma_pos_um": ("um", float),
    "temperature_uk": ("uk", float),
    "omega_mw_max_mhz": ("mhz", float),
    "atom_mass_kg": ("kg", float),
    "k_eff_per_nm": ("1/nm", float),
    "seed": (None, int),
}

_UNIT_ALIASES = {
    "mhz": {"mhz"},
    "ghz_um6": {"ghz_um6", "ghz*um^6", "ghz um^6", "ghzum6", "ghz*um6"},
    "um": {"um", "μm", "micron"},
    "uk": {"uk", "μk"},
    "kg": {"kg"},
    "1/nm": {"1/nm", "nm^-1", "nm-1"},
}

_VALUE_RE = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(.*)$")


def parse_config(text: str) -> dict[str, float | int]:
    """Parse ``key = value`` text into a raw dict, checking keys and unit suffixes."""
    raw: dict[str, float | int] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line.split()[0], f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(key, f"line {lineno}: unknown key")
        unit, kind = _KEYS[key]
        m = _VALUE_RE.match(value)
        if not m:
            raise ConfigError(key, f"line {lineno}: cannot parse value {value!r}")
        number, suffix = m.group(1), m.group(2).strip().lower()
        if suffix and (unit is None or suffix not in _UNIT_ALIASES[unit]):
            raise ConfigError(key, f"line {lineno}: unit mismatch, expected {unit or 'no unit'}, got {suffix!r}")
        try:
            raw[key] = int(number) if kind is int else float(number)
        except ValueError:
            raise ConfigError(key, f"line {lineno}: expected an integer, got {number!r}") from None
    return raw


def load_params(config_text: str = "") -> RunConfig:
    """Build validated parameter objects from config text.

    Missing keys fall back to the default operating point
    V/2pi = 21 MHz (C6 = 858 GHz um^6, R0 = 5.87 um), Delta/2pi = -4.5 MHz,
    Omega/2pi = 8 MHz. Unpacks as ``params, noise, preset``.
    """
    raw = parse_config(config_text)
    defaults = PhysicalParams()
    r0 = raw.get("r0_um", defaults.r0)
    c6 = mhz(raw["c6_ghz_um6"] * 1e3) if "c6_ghz_um6" in raw else defaults.c6
    if "v_mhz" in raw:
        c6 = mhz(raw["v_mhz"]) * r0**6
    params = PhysicalParams(
        n_atoms=raw.get("n_atoms", defaults.n_atoms),
        omega=mhz(raw["omega_mhz"]) if "omega_mhz" in raw else defaults.omega,
        delta=mhz(raw["delta_mhz"]) if "delta_mhz" in raw else defaults.delta,
        c6=c6,
        r0=r0,
        interaction_range=raw.get("interaction_range", defaults.interaction_range),
    )
    noise = NoiseParams(
        sigma_pos=raw.get("sigma_pos_um", 0.1),
        temperature=raw.get("temperature_uk", 10.0),
        atom_mass=raw.get("atom_mass_kg", RB87_MASS),
        k_eff=raw.get("k_eff_per_nm", K_EFF_COUNTER),
    )
    cap = mhz(raw.get("omega_mw_max_mhz", 0.14))
    if not cap > 0:
        raise ConfigError("omega_mw_max_mhz", "must be positive")
    preset = DrivePreset(params.v_nn, params.delta, cap, f"{noise.temperature:g}uK", noise.temperature)
    return RunConfig(params, noise, preset, int(raw.get("seed", 0)))


def dump_config(cfg: RunConfig) -> str:
    """Inverse of :func:`load_params` (full precision)."""
    p, n = cfg.params, cfg.noise
    lines = [
        f"n_atoms = {p.n_atoms}",
        f"omega_mhz = {to_mhz(p.omega)!r}",
        f"delta_mhz = {to_mhz(p.delta)!r}",
        f"c6_ghz_um6 = {to_mhz(p.c6) / 1e3!r}",
        f"r0_um = {p.r0!r}",
        f"interaction_range = {p.interaction_range}",
        f"sigma_pos_um = {n.sigma_pos!r}",
        f"temperature_uk = {n.temperature!r}",
        f"omega_mw_max_mhz = {to_mhz(cfg.preset.omega_mw_max)!r}",
        f"atom_mass_kg = {n.atom_mass!r}",
        f"k_eff_per_nm = {n.k_eff!r}",
        f"seed = {cfg.seed}",
    ]
    return "\n".join(lines) + "\n"


def load_presets(text: str | None = None) -> list[DrivePreset]:
    """Per-temperature operating points (bundled table unless `text` is given).

    Columns: ``temperature_uk, v_mhz, delta_mhz, omega_mw_max_mhz``.
    """
    if text is None:
        text = resources.files("rydsim").joinpath("data/temperature_presets.csv").read_text(encoding="utf-8")
    presets = []
    header = None
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            header = cells
            continue
        row = dict(zip(header, cells))
        t = float(row["temperature_uk"])
        presets.append(
            DrivePreset(
                v=mhz(float(row["v_mhz"])),
                delta=mhz(float(row["delta_mhz"])),
                omega_mw_max=mhz(float(row["omega_mw_max_mhz"])),
                label=f"{t:g}uK",
                temperature=t,
            )
        )
    return presets
