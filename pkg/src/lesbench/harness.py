"""Benchmark harness: worker pools, run protocol, reports, scaling math.

``run_benchmark`` executes the configured case for N steps (default 50) on
a worker pool, averages the master rank's per-step phase timings over the
trailing window (default 40 steps, which also swallows JIT warm-up), and
returns a :class:`TimingReport`.  Reports serialise to a fixed-header CSV
plus a JSON summary; ``scaling_table`` turns a set of reports for the same
case and grid into speedup / parallel-efficiency rows.

Worker pools: ``inproc`` runs one thread per rank over shared mailboxes
(the kernels drop the GIL, so threads scale on multicore hosts); ``socket``
forks one process per rank wired through the TCP transport, exercising the
documented wire format end to end.
"""

from __future__ import annotations

import csv
import json
import multiprocessing
import os
import socket as socketlib
import statistics
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import cases as cases_mod
from .errors import (ConfigError, NonPositiveTime, ReportIncomplete,
                     TransportFailure)
from .exchange import InprocRouter, NullTransport, SocketTransport
from .mesh import build_decomposition
from .profiler import NullProfiler, Profiler
from .stepper import SimConfig, Stepper

TRANSPORT_ENV = "LESBENCH_TRANSPORT"
SOCKET_ADDRS_ENV = "LESBENCH_SOCKET_ADDRS"

CSV_HEADER = ["step", "t", "dt", "T_TT", "T_LS", "T_CD", "T_P", "T_up",
              "comm"]


@dataclass
class StepRecord:
    step: int
    t: float
    dt: float
    t_total: float
    t_ls: float
    t_cd: float
    t_p: float
    t_up: float
    comm: float

    def row(self):
        return [self.step, self.t, self.dt, self.t_total, self.t_ls,
                self.t_cd, self.t_p, self.t_up, self.comm]


@dataclass
class TimingReport:
    case: str
    grid: tuple
    topology: tuple
    scheme: str
    n_workers: int
    workers_per_node: int
    steps: int
    window: int
    records: list = field(default_factory=list)

    @property
    def node_equivalents(self) -> float:
        return self.n_workers / self.workers_per_node

    def _window_records(self):
        if not self.records:
            raise ReportIncomplete("no step records collected")
        w = min(self.window, len(self.records))
        return self.records[-w:]

    def averages(self) -> dict:
        recs = self._window_records()
        n = len(recs)
        out = {
            "T_TT": sum(r.t_total for r in recs) / n,
            "T_LS": sum(r.t_ls for r in recs) / n,
            "T_CD": sum(r.t_cd for r in recs) / n,
            "T_P": sum(r.t_p for r in recs) / n,
            "T_up": sum(r.t_up for r in recs) / n,
            "comm": sum(r.comm for r in recs) / n,
        }
        totals = [r.t_total for r in recs]
        out["T_TT_std"] = statistics.pstdev(totals) if n > 1 else 0.0
        return out

    def breakdown_fractions(self) -> dict:
        avg = self.averages()
        tt = avg["T_TT"]
        if tt <= 0.0:
            raise ReportIncomplete("window average total time is zero")
        return {key: avg[key] / tt for key in ("T_LS", "T_CD", "T_P", "T_up")}

    def comm_fraction(self) -> float:
        avg = self.averages()
        return avg["comm"] / avg["T_TT"]

    def to_json_dict(self) -> dict:
        return {
            "case": self.case,
            "grid": list(self.grid),
            "topology": list(self.topology),
            "scheme": self.scheme,
            "n_workers": self.n_workers,
            "workers_per_node": self.workers_per_node,
            "node_equivalents": self.node_equivalents,
            "steps": self.steps,
            "window": self.window,
            "averages": self.averages(),
            "breakdown_fractions": self.breakdown_fractions(),
            "comm_fraction": self.comm_fraction(),
            "records": [r.row() for r in self.records],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "TimingReport":
        rep = cls(case=data["case"], grid=tuple(data["grid"]),
                  topology=tuple(data["topology"]), scheme=data["scheme"],
                  n_workers=data["n_workers"],
                  workers_per_node=data["workers_per_node"],
                  steps=data["steps"], window=data["window"])
        for row in data["records"]:
            rep.records.append(StepRecord(int(row[0]), *map(float, row[1:])))
        return rep


# ---------------------------------------------------------------------------
# scaling formulas
# ---------------------------------------------------------------------------

def speedup(t_1: float, t_n: float) -> float:
    """S_n = T_1 / T_n."""
    if t_1 <= 0.0 or t_n <= 0.0:
        raise NonPositiveTime("speedup needs positive times")
    return t_1 / t_n


def efficiency(p: float, t_p: float, q: float, t_q: float) -> dict:
    """Parallel efficiency, reported both ways.

    ``literal`` follows E = (P T_p)/(Q T_q) exactly as defined; that reads
    above one when scaling is ideal and P > Q, so the conventional
    normalisation (Q T_q)/(P T_p), which is 1.0 for ideal scaling, is
    returned alongside it rather than guessing intent.
    """
    if min(p, t_p, q, t_q) <= 0.0:
        raise NonPositiveTime("efficiency needs positive counts and times")
    literal = (p * t_p) / (q * t_q)
    return {"literal": literal, "normalized": 1.0 / literal}


def scaling_table(reports: list, baseline: str = "first") -> list:
    """Rows {n, T_n, S_n, E_literal, E_normalized} against a baseline run.

    All reports must describe the same case and grid; ``baseline`` picks
    either the smallest worker count present or strictly the serial run.
    """
    if not reports:
        raise ConfigError("no reports to tabulate")
    meta = {(r.case, r.grid, r.scheme) for r in reports}
    if len(meta) > 1:
        raise ConfigError(f"reports mix cases/grids: {sorted(meta)}")
    ordered = sorted(reports, key=lambda r: r.n_workers)
    if baseline == "serial":
        base = next((r for r in ordered if r.n_workers == 1), None)
        if base is None:
            raise ConfigError("serial baseline requested but no 1-worker run")
    elif baseline == "first":
        base = ordered[0]
    else:
        raise ConfigError(f"unknown baseline {baseline!r}")
    t_base = base.averages()["T_TT"]
    n_base = base.n_workers
    rows = []
    for rep in ordered:
        t_n = rep.averages()["T_TT"]
        eff = efficiency(rep.n_workers, t_n, n_base, t_base)
        rows.append({
            "n": rep.n_workers,
            "T_n": t_n,
            "S_n": speedup(t_base, t_n),
            "E_literal": eff["literal"],
            "E_normalized": eff["normalized"],
        })
    return rows


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

def write_report(report: TimingReport, out_dir: str, stem: str = None):
    """Emit <stem>.csv (one row per step) and <stem>.json (summary)."""
    os.makedirs(out_dir, exist_ok=True)
    if stem is None:
        stem = f"{report.case}_n{report.n_workers}"
    csv_path = os.path.join(out_dir, stem + ".csv")
    json_path = os.path.join(out_dir, stem + ".json")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rec in report.records:
            writer.writerow(rec.row())
    with open(json_path, "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2)
    return csv_path, json_path


def read_report(path: str) -> TimingReport:
    with open(path) as fh:
        return TimingReport.from_json_dict(json.load(fh))


def write_scaling_csv(rows: list, path: str):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "T_n", "S_n", "E_literal", "E_normalized"])
        for row in rows:
            writer.writerow([row["n"], row["T_n"], row["S_n"],
                             row["E_literal"], row["E_normalized"]])
    return path


# ---------------------------------------------------------------------------
# worker pools
# ---------------------------------------------------------------------------

def _run_rank(rank, transport, config_dict, collect_fields, diagnostics):
    """Worker body shared by every transport flavour."""
    config = SimConfig.from_dict(config_dict)
    case = cases_mod.make_case(config)
    plan = build_decomposition(case.grid, config.topology, case.ghost_width,
                               case.boundary_kinds)
    sub = plan.subdomains[rank]
    profiler = Profiler() if rank == 0 else NullProfiler()
    step_ctx = Stepper(plan, sub, case, transport, profiler)
    state = cases_mod.init_state(case, plan, sub)
    step_ctx.refresh(state.fields, state.t, state.fields.names())

    records = []
    diag_values = []
    for istep in range(1, config.steps + 1):
        profiler.reset()
        step_ctx.step(state)
        if rank == 0:
            snap = profiler.snapshot()
            records.append(StepRecord(
                istep, state.t, state.dt, snap["total"], snap["ls"],
                snap["cd"], snap["p"], snap["up"], snap["comm"]))
        if diagnostics is not None:
            diag_values.append(diagnostics(step_ctx, state, plan, sub,
                                           transport))

    result = {"rank": rank, "records": records, "diagnostics": diag_values,
              "final_divergence": step_ctx.post_step_divergence(state.fields)}
    if collect_fields:
        result["offset"] = sub.offset
        result["local_dims"] = sub.local_dims
        result["fields"] = {
            name: np.ascontiguousarray(state.fields.interior(name))
            for name in state.fields.names()}
    return result


def _pool_inproc(n, worker):
    router = InprocRouter(n)
    results = [None] * n
    errors = []

    def body(rank):
        try:
            results[rank] = worker(rank, router.transport(rank))
        except BaseException as exc:  # noqa: BLE001 - propagate to caller
            errors.append((rank, exc))

    if n == 1:
        return [worker(0, NullTransport())]
    threads = [threading.Thread(target=body, args=(r,), daemon=True)
               for r in range(n)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        rank, exc = errors[0]
        raise RuntimeError(f"worker {rank} failed") from exc
    return results


def _socket_child(rank, listeners, addresses, conn, worker):
    try:
        for r, lst in enumerate(listeners):
            if r != rank:
                lst.close()
        transport = SocketTransport(rank, addresses, listener=listeners[rank])
        try:
            out = worker(rank, transport)
        finally:
            transport.close()
        conn.send(("ok", out))
    except BaseException as exc:  # noqa: BLE001
        conn.send(("error", repr(exc)))
    finally:
        conn.close()


def _socket_addresses(n):
    """Worker endpoints: LESBENCH_SOCKET_ADDRS (host:port, comma list) or
    loopback with OS-assigned ports."""
    env = os.environ.get(SOCKET_ADDRS_ENV)
    if not env:
        return None
    parts = [p.strip() for p in env.split(",") if p.strip()]
    if len(parts) != n:
        raise ConfigError(
            f"{SOCKET_ADDRS_ENV} lists {len(parts)} endpoints for {n} "
            "workers")
    out = []
    for part in parts:
        host, port = part.rsplit(":", 1)
        out.append((host, int(port)))
    return out


def _pool_socket(n, worker):
    if n == 1:
        return [worker(0, NullTransport())]
    fixed = _socket_addresses(n)
    listeners = []
    addresses = []
    for rank in range(n):
        bind_to = fixed[rank] if fixed else ("127.0.0.1", 0)
        lst = socketlib.create_server(bind_to)
        listeners.append(lst)
        addresses.append((bind_to[0], lst.getsockname()[1]))
    ctx = multiprocessing.get_context("fork")
    procs = []
    conns = []
    for rank in range(n):
        parent_conn, child_conn = ctx.Pipe()
        proc = ctx.Process(target=_socket_child,
                           args=(rank, listeners, addresses, child_conn,
                                 worker))
        proc.start()
        child_conn.close()
        conns.append(parent_conn)
        procs.append(proc)
    for lst in listeners:
        lst.close()
    results = [None] * n
    failures = []
    for rank, conn in enumerate(conns):
        try:
            status, payload = conn.recv()
        except EOFError:
            failures.append((rank, "worker exited without a result"))
            continue
        if status == "ok":
            results[rank] = payload
        else:
            failures.append((rank, payload))
    for proc in procs:
        proc.join(timeout=60)
        if proc.is_alive():
            proc.terminate()
    if failures:
        raise TransportFailure(f"socket workers failed: {failures}")
    return results


def run_workers(n: int, worker, transport: str = "inproc"):
    if transport == "inproc":
        return _pool_inproc(n, worker)
    if transport == "socket":
        return _pool_socket(n, worker)
    raise ConfigError(f"unknown transport {transport!r}")


def transport_from_env(default: str = "inproc") -> str:
    return os.environ.get(TRANSPORT_ENV, default)


# ---------------------------------------------------------------------------
# top-level entry points
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    report: TimingReport
    fields: dict | None = None
    diagnostics: list | None = None
    final_divergence: float = 0.0


def run_benchmark(config: SimConfig, collect_fields: bool = False,
                  diagnostics=None) -> RunResult:
    """Run the configured case and return the master rank's report.

    ``diagnostics`` is an optional callable
    ``f(stepper, state, plan, sub, transport)`` evaluated after every step
    on every rank (outside the timed section); its per-step values come
    back in ``RunResult.diagnostics`` (rank 0's copy).
    """
    config = SimConfig.from_dict(config.to_dict())  # validate + normalise
    case = cases_mod.make_case(config)
    plan = build_decomposition(case.grid, config.topology, case.ghost_width,
                               case.boundary_kinds)
    n = plan.n_workers
    cfg_dict = config.to_dict()

    def worker(rank, transport):
        return _run_rank(rank, transport, cfg_dict, collect_fields,
                         diagnostics)

    t0 = time.perf_counter()
    results = run_workers(n, worker, config.transport)
    elapsed = time.perf_counter() - t0
    master = results[0]
    report = TimingReport(
        case=case.name, grid=case.grid.dims, topology=tuple(config.topology),
        scheme=case.scheme, n_workers=n,
        workers_per_node=config.workers_per_node, steps=config.steps,
        window=config.window, records=master["records"])
    if not report.records or len(report.records) != config.steps:
        raise ReportIncomplete(
            f"expected {config.steps} step records, got "
            f"{len(report.records)} after {elapsed:.1f}s")
    fields = None
    if collect_fields:
        fields = assemble_global_fields(results, case.grid.dims)
    return RunResult(report=report, fields=fields,
                     diagnostics=master["diagnostics"],
                     final_divergence=master["final_divergence"])


def assemble_global_fields(results, global_dims) -> dict:
    """Stitch per-rank interior blocks into global arrays."""
    names = results[0]["fields"].keys()
    out = {}
    for name in names:
        arr = np.zeros(global_dims, dtype=np.float64)
        for res in results:
            ox, oy, oz = res["offset"]
            nx, ny, nz = res["local_dims"]
            arr[ox:ox + nx, oy:oy + ny, oz:oz + nz] = res["fields"][name]
        out[name] = arr
    return out
