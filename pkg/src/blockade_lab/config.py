"""INI-style device and scenario files with unit-suffixed keys.

Frequencies are given in Hz (``*_hz``) and converted to angular units on
load; times use ``*_us`` (microseconds) or ``*_s``; angles use ``*_rad``.
Lists are whitespace separated.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .hamiltonian import TWO_PI, DeviceParams


class ConfigError(ValueError):
    """Malformed or inconsistent configuration; message names the file, section and key."""


def _read(path: str | Path) -> configparser.ConfigParser:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: file not found")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        with path.open() as fh:
            cp.read_file(fh)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: key outside any [section]") from exc
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{path}: line {lineno}: cannot parse {line.strip()!r}") from exc
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        what = f"key {exc.option!r} in [{exc.section}]" if hasattr(exc, "option") else f"section [{exc.section}]"
        raise ConfigError(f"{path}: line {exc.lineno}: duplicate {what}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cp


@dataclass
class Section:
    """Typed access to one INI section with diagnostics naming file and key."""

    path: Path
    name: str
    raw: dict[str, str]

    def _where(self, key: str) -> str:
        return f"{self.path} [{self.name}] {key}"

    def has(self, key: str) -> bool:
        return key in self.raw

    def text(self, key: str, default=None) -> str:
        if key not in self.raw:
            if default is None:
                raise ConfigError(f"{self._where(key)}: missing required key")
            return default
        return self.raw[key].strip()

    def number(self, key: str, default=None) -> float:
        if key not in self.raw and default is not None:
            return float(default)
        val = self.text(key)
        try:
            return float(val)
        except ValueError as exc:
            raise ConfigError(f"{self._where(key)}: expected a number, got {val!r}") from exc

    def integer(self, key: str, default=None) -> int:
        v = self.number(key, default)
        if v != int(v):
            raise ConfigError(f"{self._where(key)}: expected an integer, got {v}")
        return int(v)

    def numbers(self, key: str, default=None) -> list[float]:
        if key not in self.raw and default is not None:
            return list(default)
        val = self.text(key)
        try:
            return [float(x) for x in val.replace(",", " ").split()]
        except ValueError as exc:
            raise ConfigError(f"{self._where(key)}: expected numbers, got {val!r}") from exc

    def flag(self, key: str, default: bool = False) -> bool:
        if key not in self.raw:
            return default
        val = self.raw[key].strip().lower()
        if val in ("1", "true", "yes", "on"):
            return True
        if val in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{self._where(key)}: expected true/false, got {val!r}")

    def angular(self, key: str, default=None) -> float:
        """Read ``key_hz`` and return 2*pi times it."""
        return TWO_PI * self.number(f"{key}_hz", default)

    def angular_list(self, key: str, default=None) -> list[float]:
        return [TWO_PI * x for x in self.numbers(f"{key}_hz", default)]

    def seconds(self, key: str, default_us=None) -> float:
        if f"{key}_s" in self.raw:
            return self.number(f"{key}_s")
        return 1e-6 * self.number(f"{key}_us", default_us)

    def path_value(self, key: str, default=None) -> Path | None:
        if key not in self.raw:
            return default
        p = Path(self.raw[key].strip())
        return p if p.is_absolute() else (self.path.parent / p)


class ConfigFile:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._cp = _read(self.path)

    def has(self, name: str) -> bool:
        return self._cp.has_section(name)

    def section(self, name: str, required: bool = True) -> Section:
        if not self._cp.has_section(name):
            if required:
                raise ConfigError(f"{self.path}: missing section [{name}]")
            return Section(self.path, name, {})
        return Section(self.path, name, dict(self._cp.items(name)))

    def sections(self) -> list[str]:
        return self._cp.sections()


def load_device(path: str | Path) -> DeviceParams:
    """Device file: ``[device]`` plus one ``[mode LABEL]`` per mode and optional ``[cross_kerr]``.

    Cross-Kerr keys are ``LABEL1_LABEL2_hz``; each unordered pair is listed once.
    """
    cfg = ConfigFile(path)
    dev = cfg.section("device")
    labels = dev.text("modes").split()
    if not labels:
        raise ConfigError(f"{cfg.path} [device] modes: no modes listed")
    omega_m, chi, kerr, t1, t2 = [], [], [], [], []
    for lab in labels:
        sec = cfg.section(f"mode {lab}")
        omega_m.append(sec.angular("omega"))
        chi.append(sec.angular("chi"))
        kerr.append(sec.angular("kerr", 0.0))
        t1.append(sec.seconds("T1"))
        t2.append(sec.seconds("T2") if sec.has("T2_us") or sec.has("T2_s") else 2 * t1[-1])
    ck = np.zeros((len(labels), len(labels)))
    cross = cfg.section("cross_kerr", required=False)
    for key in cross.raw:
        if not key.endswith("_hz"):
            raise ConfigError(f"{cfg.path} [cross_kerr] {key}: keys must look like A_B_hz")
        parts = key[:-3].split("_")
        if len(parts) != 2 or any(p not in labels for p in parts) or parts[0] == parts[1]:
            raise ConfigError(f"{cfg.path} [cross_kerr] {key}: unknown mode pair")
        i, j = labels.index(parts[0]), labels.index(parts[1])
        ck[i, j] = ck[j, i] = TWO_PI * cross.number(key)
    params = DeviceParams(
        omega_q=dev.angular("omega_q"),
        omega_m=tuple(omega_m),
        chi_m=tuple(chi),
        kerr_m=tuple(kerr),
        cross_kerr=ck,
        T1_q=dev.seconds("T1_q"),
        T2_q=dev.seconds("T2_q"),
        nth_q=dev.number("nth_q", 0.0),
        T1_m=tuple(t1),
        T2_m=tuple(t2),
        labels=tuple(labels),
    )
    try:
        params.validate()
    except ValueError as exc:
        raise ConfigError(f"{cfg.path}: {exc}") from exc
    return params
