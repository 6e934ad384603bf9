"""Command-line entry point: ``symek <command> [flags]``.

Every command writes one machine-readable artifact (JSON, or CSV for ``sps``)
to ``--out`` or stdout.  With ``--out`` a manifest carrying the config hash
and timestamps is written next to it as ``<out>.manifest.json``; the artifact
itself contains no timestamps, so identical configs give identical bytes.

Exit status: 0 when every checked invariant holds, 1 when a check fails,
2 for configuration errors, 3 when a run aborts with a library error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import hashlib
import io
import json
import logging
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .errors import ConfigError, NotConverged, NotMonotone, ParseError, SymekError
from .functionals import CATALOG, build_functional, check_polarization_monotone
from .rearrangement import PolarizationSchedule, random_cone_element, verify_framework
from .spaces import FunctionElement, ModelDescriptor
from .variational import (
    EkelandParams,
    SPSTrace,
    ekeland_point,
    extract_minimizer,
    premise_start,
    sps_sequence,
    symmetric_ekeland,
)

log = logging.getLogger("symek")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_ERROR = 0, 1, 2, 3
COMMANDS = ("verify-axioms", "check-monotone", "ekeland", "symmetric-ekeland", "sps")


def parse_schedule(spec: str):
    """``geometric:<ratio>:<count>`` or ``list:<v1,v2,...>`` to a list of eps.

    >>> parse_schedule("geometric:0.5:3")
    [0.5, 0.25, 0.125]
    """
    kind, sep, rest = spec.partition(":")
    if not sep:
        raise ParseError(f"schedule {spec!r} has no ':'", position=len(spec))
    pos = len(kind) + 1
    if kind == "geometric":
        parts = rest.split(":")
        if len(parts) != 2:
            raise ParseError("expected geometric:<ratio>:<count>", position=pos)
        try:
            ratio = float(parts[0])
        except ValueError:
            raise ParseError(f"bad ratio {parts[0]!r}", position=pos) from None
        try:
            count = int(parts[1])
        except ValueError:
            raise ParseError(f"bad count {parts[1]!r}", position=pos + len(parts[0]) + 1) from None
        if not 0 < ratio < 1:
            raise ParseError("ratio must lie in (0, 1)", position=pos)
        if count < 1:
            raise ParseError("count must be >= 1", position=pos + len(parts[0]) + 1)
        return [ratio**j for j in range(1, count + 1)]
    if kind == "list":
        values = []
        for item in rest.split(","):
            try:
                v = float(item)
            except ValueError:
                raise ParseError(f"bad value {item!r}", position=pos) from None
            if not v > 0:
                raise ParseError(f"value {item!r} is not positive", position=pos)
            if values and v >= values[-1]:
                raise ParseError(f"value {item!r} does not decrease", position=pos)
            values.append(v)
            pos += len(item) + 1
        return values
    raise ParseError(f"unknown schedule kind {kind!r}", position=0)


def parse_model(spec: str) -> ModelDescriptor:
    """``vector:<n>`` or ``grid1d:<n>[:<h>]``."""
    parts = spec.split(":")
    try:
        if parts[0] == "vector" and len(parts) == 2:
            return ModelDescriptor.vector(int(parts[1]))
        if parts[0] in ("grid1d", "grid") and len(parts) in (2, 3):
            h = float(parts[2]) if len(parts) == 3 else 1.0
            return ModelDescriptor.grid1d(int(parts[1]), h)
    except ValueError as exc:
        raise ConfigError(str(exc), field="model") from None
    raise ConfigError(f"expected vector:<n> or grid1d:<n>[:<h>], got {spec!r}", field="model")


def _scalar(text):
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


def parse_functional(spec: str):
    """``name[:k=v,...]`` to ``(name, params)``."""
    name, _, rest = spec.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq or not key:
                raise ConfigError(f"expected k=v, got {item!r}", field="functional")
            params[key] = _scalar(val)
    return name, params


@dataclasses.dataclass
class RunConfig:
    command: str = "sps"
    model: str = "vector:16"
    functional: str = "quadratic"
    functional_params: dict = dataclasses.field(default_factory=dict)
    rho: float = 0.1
    sigma: float = 0.1
    schedule: str = "geometric:0.5:10"
    seed: int = 0
    samples: int = 1000
    init: str = "premise"
    polarization: str = "sweep"
    conv_tol: float = 1e-3
    output_path: Optional[str] = None
    format: str = "json"

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}", field="command")
        if self.format not in ("json", "csv"):
            raise ConfigError(f"unknown format {self.format!r}", field="format")
        if self.format == "csv" and self.command != "sps":
            raise ConfigError("csv output is only available for sps", field="format")
        if self.init not in ("premise", "random"):
            raise ConfigError(f"unknown init {self.init!r}", field="init")
        if self.polarization not in ("sweep", "seeded"):
            raise ConfigError(f"unknown polarization {self.polarization!r}", field="polarization")
        if self.functional not in CATALOG:
            raise ConfigError(f"unknown functional {self.functional!r}; known: {sorted(CATALOG)}", field="functional")
        for name in ("rho", "sigma", "conv_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError("must be positive", field=name)
        if self.samples < 0:
            raise ConfigError("must be >= 0", field="samples")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("must be a 64-bit unsigned integer", field="seed")
        parse_model(self.model)
        parse_schedule(self.schedule)
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config fields {sorted(extra)}", field=sorted(extra)[0])
        return cls(**d)

    def artifact_fields(self):
        """Config as recorded inside artifacts (output location excluded)."""
        d = self.to_dict()
        d.pop("output_path")
        return d

    def hash(self):
        blob = json.dumps(self.artifact_fields(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclasses.dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    started: str
    finished: str
    command: str
    summary: dict
    exit_status: int
    output_path: Optional[str]

    def to_dict(self):
        return dataclasses.asdict(self)


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _start_point(cfg, f, model, rng):
    if cfg.init == "random":
        u = random_cone_element(model, rng, f.sample_scale)
        return FunctionElement(model, f.project_domain(u.values))
    return premise_start(f, model, cfg.rho, cfg.sigma, cfg.seed)


def _params(cfg, sigma=None):
    return EkelandParams(
        rho=cfg.rho, sigma=cfg.sigma if sigma is None else sigma, cert_samples=cfg.samples, cert_seed=cfg.seed
    )


def _schedule(cfg):
    if cfg.polarization == "seeded":
        return PolarizationSchedule.seeded(cfg.seed)
    return PolarizationSchedule.sweep()


def _run_verify(cfg, model):
    report = verify_framework(model, cfg.samples, cfg.seed)
    summary = {a.name: a.worst_residual for a in report.axioms}
    return report.to_dict(), report.passed, summary


def _run_monotone(cfg, model, f):
    report = check_polarization_monotone(f, model, cfg.samples, cfg.seed)
    return report.to_dict(), report.passed, {"max_violation": report.max_violation}


def _run_ekeland(cfg, model, f):
    rng = np.random.default_rng(cfg.seed)
    u0 = _start_point(cfg, f, model, rng)
    params = _params(cfg)
    v, diag = ekeland_point(f, u0, params)
    passed = diag.displacement_ok and (diag.d_residual is None or diag.d_residual <= params.cert_tol)
    out = {"schema": "symek.ekeland/1", "u0": u0.to_dict(), "v": v.to_dict(), "diagnostics": diag.to_dict()}
    out["passed"] = passed
    return out, passed, {"f_v": diag.f_v, "d_residual": diag.d_residual}


def _run_symmetric(cfg, model, f):
    if not f.claims_polarization_monotone:
        raise NotMonotone(f"{f.name} does not claim polarization monotonicity")
    rng = np.random.default_rng(cfg.seed)
    u = _start_point(cfg, f, model, rng)
    cert = symmetric_ekeland(f, u, _params(cfg), _schedule(cfg))
    out = cert.to_dict()
    out["u"] = u.to_dict()
    return out, cert.passed, cert.conclusions


def sps_csv(trace: SPSTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SPSTrace.CSV_FIELDS)
    for row in trace.csv_rows():
        w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])
    return buf.getvalue()


def _run_sps(cfg, model, f):
    eps = parse_schedule(cfg.schedule)
    rng = np.random.default_rng(cfg.seed)
    u = random_cone_element(model, rng, f.sample_scale)
    u = FunctionElement(model, f.project_domain(u.values))
    params = EkelandParams(rho=eps[0], sigma=eps[0], cert_samples=cfg.samples, cert_seed=cfg.seed)
    trace = sps_sequence(f, u, eps, params, _schedule(cfg), gradient_check=f.grad(u.values) is not None)
    try:
        _, limit = extract_minimizer(trace, cfg.conv_tol)
    except NotConverged as exc:
        limit = {"error": str(exc), **exc.diagnostics}
    if cfg.format == "csv":
        text = sps_csv(trace)
    else:
        out = trace.to_dict()
        out["limit_report"] = limit
        text = out
    summary = {"stages": len(trace.entries), "f_last": trace.entries[-1].f_v, **trace.invariants()}
    return text, trace.passed, summary


def run(cfg: RunConfig, stdout=None) -> RunManifest:
    """Execute one configured command, write its artifact and manifest."""
    stdout = stdout or sys.stdout
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    cfg.validate()
    model = parse_model(cfg.model)
    f = None
    if cfg.command != "verify-axioms":
        f = build_functional(cfg.functional, model, dict(cfg.functional_params))
    handlers = {
        "verify-axioms": lambda: _run_verify(cfg, model),
        "check-monotone": lambda: _run_monotone(cfg, model, f),
        "ekeland": lambda: _run_ekeland(cfg, model, f),
        "symmetric-ekeland": lambda: _run_symmetric(cfg, model, f),
        "sps": lambda: _run_sps(cfg, model, f),
    }
    payload, passed, summary = handlers[cfg.command]()
    if not isinstance(payload, str):
        payload = _dumps({"config": cfg.artifact_fields(), "result": payload})
    if cfg.output_path:
        with open(cfg.output_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(payload)
    else:
        stdout.write(payload)
    status = EXIT_OK if passed else EXIT_FAILED
    manifest = RunManifest(
        config_hash=cfg.hash(),
        tool_version=__version__,
        started=started,
        finished=_dt.datetime.now(_dt.timezone.utc).isoformat(),
        command=cfg.command,
        summary=summary,
        exit_status=status,
        output_path=cfg.output_path,
    )
    if cfg.output_path:
        with open(cfg.output_path + ".manifest.json", "w", encoding="utf-8") as fh:
            fh.write(_dumps(manifest.to_dict()))
    return manifest


def _add_common(p):
    p.add_argument("--model", help="vector:<n> or grid1d:<n>[:<h>]")
    p.add_argument("--functional", help="name[:k=v,...]; one of " + ", ".join(sorted(CATALOG)))
    p.add_argument("--rho", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--schedule", help="geometric:<ratio>:<count> or list:<v1,v2,...>")
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int, help="sample count (checks) or probe count (certificates)")
    p.add_argument("--init", choices=("premise", "random"))
    p.add_argument("--polarization", choices=("sweep", "seeded"))
    p.add_argument("--conv-tol", dest="conv_tol", type=float)
    p.add_argument("--out", dest="output_path")
    p.add_argument("--format", choices=("json", "csv"))


def build_parser():
    parser = argparse.ArgumentParser(prog="symek", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _add_common(sub.add_parser(name))
    p = sub.add_parser("run", help="run a JSON config; flags override its fields")
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--command", dest="run_command", choices=COMMANDS)
    _add_common(p)
    return parser


def config_from_args(args) -> RunConfig:
    base = {}
    if args.command == "run":
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    base = json.load(fh)
            except OSError as exc:
                raise ConfigError(str(exc), field="config") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"line {exc.lineno} column {exc.colno}: {exc.msg}", field="config") from None
            if not isinstance(base, dict):
                raise ConfigError("config must be a JSON object", field="config")
        if args.run_command:
            base["command"] = args.run_command
    else:
        base["command"] = args.command
    overrides = {
        k: getattr(args, k)
        for k in ("model", "rho", "sigma", "schedule", "seed", "samples", "init", "polarization", "conv_tol")
        if getattr(args, k) is not None
    }
    if args.output_path is not None:
        overrides["output_path"] = args.output_path
    if args.format is not None:
        overrides["format"] = args.format
    elif args.output_path is not None and args.output_path.endswith(".csv"):
        overrides["format"] = "csv"
    if args.functional is not None:
        name, params = parse_functional(args.functional)
        overrides["functional"] = name
        overrides["functional_params"] = params
    base.update(overrides)
    try:
        return RunConfig.from_dict(base)
    except TypeError as exc:
        raise ConfigError(str(exc), field="config") from None


def _setup_logging():
    level = os.environ.get("SYMEK_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        manifest = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SymekError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    log.info("%s finished with status %d", cfg.command, manifest.exit_status)
    return manifest.exit_status


if __name__ == "__main__":
    sys.exit(main())
