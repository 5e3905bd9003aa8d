"""JSON scenario configs, built-in scenarios, CSV/JSON outputs and batch runs."""
from __future__ import annotations

import copy
import csv
import dataclasses
import io
import json
import os
import re
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .analysis import FIGURE_GROUPS, get_cases, impact_sweep
from .control import ControlParams
from .core import ARM_NAMES, PHASES, ConverterParams, FaultSpec
from .detection import DetectorConfig
from .simulate import simulate

WORKERS_ENV = "MMCSIM_WORKERS"

RUN_DEFAULTS = {
    "name": "scenario",
    "t_end": 0.3,
    "decimation": 10,
    "freeze_caps": False,
    "self_check": True,
    "out_dir": None,
    "timeseries_file": "timeseries.csv",
    "summary_file": "summary.json",
}

FAULT_DEFAULTS = {"phase": "a", "arm": "upper", "sm_index": 1, "fault_type": "T1", "t_fault": 0.05}

# Target location times (ms) the built-in fault scenarios are compared against
TABLE5_REFERENCE = {"T1": (130.0, 17.0), "T2": (135.0, 20.0)}


class ConfigError(ValueError):
    """Invalid scenario configuration; the message carries a line number when known."""


def _fields(cls):
    return {f.name: f.default for f in dataclasses.fields(cls)}


SECTIONS = {
    "converter": _fields(ConverterParams),
    "control": _fields(ControlParams),
    "detector": _fields(DetectorConfig),
    "fault": FAULT_DEFAULTS,
    "run": RUN_DEFAULTS,
}


def default_config():
    """Complete default config; ``fault`` is ``None`` (healthy)."""
    cfg = {name: dict(vals) for name, vals in SECTIONS.items()}
    cfg["fault"] = None
    return cfg


def _builtin(name, fault_type=None, injection=True):
    cfg = default_config()
    cfg["run"]["name"] = name
    cfg["detector"]["injection_enabled"] = injection
    if fault_type is not None:
        cfg["fault"] = dict(FAULT_DEFAULTS, fault_type=fault_type)
    return cfg


BUILTIN_SCENARIOS = {
    "fig11": _builtin("fig11", "T1", injection=False),
    "fig12": _builtin("fig12", "T1", injection=True),
    "fig13": _builtin("fig13", "T2", injection=False),
    "fig14": _builtin("fig14", "T2", injection=True),
    "healthy": _builtin("healthy"),
}


def builtin(name):
    if name not in BUILTIN_SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(BUILTIN_SCENARIOS)}")
    return copy.deepcopy(BUILTIN_SCENARIOS[name])


def _line_of(text, pos):
    return text.count("\n", 0, pos) + 1


def _key_line(text, section, key=None):
    """Line where ``section`` (or ``key`` inside it) is written, or ``None``."""
    m = re.search(r'"%s"\s*:' % re.escape(section), text)
    if m is None:
        return None
    if key is None:
        return _line_of(text, m.start())
    k = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, m.end())
    return None if k is None else _line_of(text, k.start())


def _where(path, line):
    loc = f"{path}:{line}" if line else str(path)
    return f"{loc}: "


def _reject_duplicates(pairs):
    seen = {}
    for k, v in pairs:
        if k in seen:
            raise ConfigError(f"duplicate key {k!r}")
        seen[k] = v
    return seen


def parse_config(text, path="<config>", base=None):
    """Merge a JSON document over ``base`` (default config) and validate it.

    Raises
    ------
    ConfigError
        Syntax errors, unknown sections or keys, wrong value types and
        out-of-range values, with ``path:line`` where it can be located.
    """
    try:
        doc = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg} (column {exc.colno})") from None
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}:1: top level must be a JSON object")
    cfg = default_config() if base is None else copy.deepcopy(base)
    for section, values in doc.items():
        if section not in SECTIONS:
            raise ConfigError(_where(path, _key_line(text, section))
                              + f"unknown section {section!r}; expected one of {sorted(SECTIONS)}")
        if section == "fault" and values is None:
            cfg["fault"] = None
            continue
        if not isinstance(values, dict):
            raise ConfigError(_where(path, _key_line(text, section)) + f"section {section!r} must be an object")
        allowed = SECTIONS[section]
        target = cfg[section]
        if section == "fault" and target is None:
            target = cfg["fault"] = dict(FAULT_DEFAULTS)
        for key, val in values.items():
            line = _key_line(text, section, key)
            if key not in allowed:
                raise ConfigError(_where(path, line) + f"unknown key {key!r} in section {section!r}")
            _check_type(section, key, val, allowed[key], path, line)
            target[key] = val
    try:
        build_objects(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return cfg


def _check_type(section, key, val, default, path, line):
    if isinstance(default, bool):
        ok = isinstance(val, bool)
        want = "a boolean"
    elif isinstance(default, (int, float)):
        ok = isinstance(val, (int, float)) and not isinstance(val, bool)
        want = "a number"
    elif isinstance(default, str):
        ok = isinstance(val, str) or (key == "fault_type" and isinstance(val, int))
        want = "a string"
    else:
        ok = val is None or (isinstance(val, (int, float, str)) and not isinstance(val, bool))
        want = "a number, string or null"
    if not ok:
        raise ConfigError(_where(path, line) + f"{section}.{key} must be {want}, got {json.dumps(val)}")


def load_config(path, base=None):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path), base)


def build_objects(cfg):
    """Dataclasses ``(conv, ctrl, det, fault)`` for a config dict; checks run-level invariants."""
    conv = ConverterParams(**cfg["converter"])
    ctrl = ControlParams(**cfg["control"])
    det = DetectorConfig(**cfg["detector"])
    fault = None if cfg["fault"] is None else FaultSpec(**cfg["fault"])
    run = cfg["run"]
    if int(run["decimation"]) != run["decimation"] or run["decimation"] < 1:
        raise ValueError("run.decimation must be an integer >= 1")
    if not run["t_end"] > 0:
        raise ValueError("run.t_end must be positive")
    if fault is not None:
        fault.check(conv)
        if not run["t_end"] > fault.t_fault:
            raise ValueError("run.t_end must exceed fault.t_fault")
    return conv, ctrl, det, fault


def csv_header(n_sm):
    cols = ["t"]
    cols += [f"i_{a}" for a in ARM_NAMES]
    cols += [f"i_z_{p}" for p in PHASES]
    cols += [f"u_C{i}" for i in range(1, n_sm + 1)]
    cols += [f"gate_sum_{a}" for a in ARM_NAMES]
    cols += ["i_inj_ref"]
    cols += [f"flag_{i}" for i in range(1, n_sm + 1)]
    return cols


def timeseries_table(res):
    return np.column_stack([res.t, res.i_arm, res.i_z, res.u_c, res.gate_sums, res.inj, res.flags])


def write_timeseries(path, res):
    """CSV with a header row, 9 significant digits and ``\\n`` line ends."""
    n_sm = res.u_c.shape[1]
    buf = io.StringIO()
    np.savetxt(buf, timeseries_table(res), fmt="%.9g", delimiter=",", newline="\n",
               header=",".join(csv_header(n_sm)), comments="")
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def summarize(cfg, res):
    fault = cfg["fault"]
    rep = res.report.to_dict()
    out = {
        "scenario": cfg["run"]["name"],
        "status": "diverged" if res.diverged else "ok",
        "instrumented_arm": ARM_NAMES[res.instrumented_arm],
        "location": rep,
        "negative_voltage_steps": res.negative_voltage_steps,
        "classifier_window": {"min": res.window[0], "max": res.window[1]},
        "config": cfg,
    }
    if fault is not None:
        out["expected_sm"] = fault["sm_index"]
        out["self_check_passed"] = rep["located_sm"] == fault["sm_index"]
    return out


def run_config(cfg, out_dir=None):
    """Simulate one config; writes the CSV and summary when ``out_dir`` is given.

    Returns ``(summary, result)``.
    """
    conv, ctrl, det, fault = build_objects(cfg)
    run = cfg["run"]
    res = simulate(conv, ctrl, det, fault, t_end=run["t_end"], decim=int(run["decimation"]),
                   freeze_caps=run["freeze_caps"])
    summary = summarize(cfg, res)
    out_dir = out_dir if out_dir is not None else run["out_dir"]
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        write_timeseries(d / run["timeseries_file"], res)
        with open(d / run["summary_file"], "w", newline="") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return summary, res


def run_scenario(cfg, out_dir=None):
    """Run one scenario and return its summary dict."""
    return run_config(cfg, out_dir)[0]


def worker_count():
    raw = os.environ.get(WORKERS_ENV, "")
    if not raw:
        return min(4, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1")
    return n


def _job(args):
    cfg, out_dir = args
    return run_scenario(cfg, out_dir)


def run_batch(configs, out_root=None, workers=None):
    """Run configs in a process pool; each writes to ``out_root/<name>``."""
    workers = worker_count() if workers is None else workers
    jobs = [(c, None if out_root is None else str(Path(out_root) / c["run"]["name"])) for c in configs]
    if workers == 1 or len(jobs) == 1:
        return [_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_job, jobs))


def scenario_matrix(sm_index=3):
    """Fault state x injection x load level: twelve configs."""
    rated = ConverterParams().rated_ac_current
    out = []
    for load, I_m in (("light", 50.0), ("rated", rated)):
        for ft in (None, "T1", "T2"):
            for inj in (False, True):
                cfg = _builtin(f"{ft or 'healthy'}_{'inj' if inj else 'noinj'}_{load}", ft, inj)
                cfg["converter"]["I_m"] = I_m
                if ft is not None:
                    cfg["fault"]["sm_index"] = sm_index
                out.append(cfg)
    return out


def repro_table5(out_dir=None, workers=None):
    """Run fig11 to fig14; return rows ``(type, t_noinj, t_inj, speedup, ref_noinj, ref_inj)`` in ms."""
    names = ("fig11", "fig12", "fig13", "fig14")
    summaries = dict(zip(names, run_batch([builtin(n) for n in names], out_dir, workers)))
    rows = []
    for ft, (a, b) in (("T1", ("fig11", "fig12")), ("T2", ("fig13", "fig14"))):
        ta = summaries[a]["location"]["location_time"]
        tb = summaries[b]["location"]["location_time"]
        ta_ms = None if ta is None else 1e3 * ta
        tb_ms = None if tb is None else 1e3 * tb
        speed = ta_ms / tb_ms if ta_ms and tb_ms else None
        rows.append((ft, ta_ms, tb_ms, speed) + TABLE5_REFERENCE[ft])
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        with open(Path(out_dir) / "table5.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fault_type", "t_loc_no_injection_ms", "t_loc_injection_ms", "speedup",
                        "reference_no_injection_ms", "reference_injection_ms"])
            for r in rows:
                w.writerow([r[0]] + ["" if v is None else f"{v:.9g}" for v in r[1:]])
    return rows, summaries


def sweep_criteria(case_ids=None, out_dir=None):
    """Threshold curves per figure group; returns ``{group: rows}`` and writes CSVs."""
    cases = get_cases(case_ids)
    if not cases:
        raise ValueError("case list is empty")
    tables = {}
    for group, ids in FIGURE_GROUPS.items():
        sel = [c for c in cases if c.case_id in ids]
        if sel:
            tables[group] = impact_sweep(sel)
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        for group, rows in tables.items():
            with open(d / f"criteria_{group}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["case_id", "N", "I_m_threshold_T1", "I_m_threshold_T2", "error"])
                for cid, n, t1, t2, err in rows:
                    w.writerow([cid, n, f"{t1:.9g}", f"{t2:.9g}", err])
    return tables


__all__ = [
    "ConfigError", "WORKERS_ENV", "SECTIONS", "BUILTIN_SCENARIOS", "default_config", "builtin",
    "parse_config", "load_config", "build_objects", "csv_header", "write_timeseries",
    "run_config", "run_scenario", "run_batch", "scenario_matrix", "repro_table5",
    "sweep_criteria", "worker_count",
]
