"""Thin command-line client for the pricing service.

The CLI owns all file I/O (scenario in, reports and CSVs out) and delegates
every computation to the HTTP service: either a remote one (--server) or an
in-process instance of the FastAPI app mounted over an ASGI transport, so no
separate server is needed for local runs.

Exit codes: 0 success, 2 invalid scenario, 3 assumption violated,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx

from .scenario import COMMANDS, dumps_report

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ASSUMPTION = 3
EXIT_NUMERICAL = 4

_KIND_TO_EXIT = {
    "invalid-scenario": EXIT_INVALID,
    "assumption-violated": EXIT_ASSUMPTION,
    "numerical-failure": EXIT_NUMERICAL,
}


class ServiceClient:
    """POST helper that talks to a remote server or the in-process app."""

    def __init__(self, server: str | None = None):
        self.server = server.rstrip("/") if server else None

    def post(self, path: str, payload: dict) -> tuple[int, dict]:
        if self.server:
            resp = httpx.post(self.server + path, json=payload, timeout=600.0)
            return resp.status_code, resp.json()

        async def _call():
            from .service import app
            transport = httpx.ASGITransport(app=app)
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://service") as client:
                resp = await client.post(path, json=payload, timeout=600.0)
                return resp.status_code, resp.json()

        return asyncio.run(_call())


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bermudan-bounds",
        description="Model-independent Bermudan option price bounds")
    p.add_argument("--scenario", required=True, help="path to a scenario JSON file")
    p.add_argument("--command", required=True, choices=COMMANDS)
    p.add_argument("--grid-n", type=int, default=None,
                   help="override solver.grid_n")
    p.add_argument("--tol", type=float, default=None, help="override solver.tol")
    p.add_argument("--seed", type=int, default=None, help="override the seed")
    p.add_argument("--out", default=None,
                   help="directory for report/CSV outputs (default: scenario dir)")
    p.add_argument("--server", default=None,
                   help="base URL of a running service (default: in-process)")
    return p


def _summary_lines(command: str, report: dict) -> list[str]:
    lines = [f"command: {command}"]
    if command == "check":
        co = report.get("convex_order", {})
        lines.append(f"convex order: {co.get('ordered')} "
                     f"(worst gap {co.get('worst_gap'):.3e} at k={co.get('worst_k'):.6g})")
        if "dispersion" in report:
            lines.append(f"dispersion crossing e = {report['dispersion']['e']:.9g}")
    elif command == "solve":
        if report.get("mode") == "time0":
            lines.append(f"time-0 value = {report['value']:.9g} "
                         f"(canonical bound {report['canonical_bound']:.9g})")
            lines.append(f"stop interval: ({report['f']:.9g}, {report['g']:.9g})")
        else:
            sol = report["solution"]
            lines.append(f"case {sol['case']}: dual = {sol['dual_value']:.9g}, "
                         f"primal = {report['primal_value']:.9g}, "
                         f"gap = {report['duality_gap']:.3e}")
    elif command == "oracle":
        for rung in report["ladder"]:
            lines.append(f"lattice {rung['n_mu']}x{rung['n_nu']}: "
                         f"value {rung['value']:.9g} "
                         f"(error {rung['error_vs_dual']:+.3e})")
    elif command == "reduce":
        for step in report["cost_trail"]:
            lines.append(f"{step['stage']:>10}: cost = {step['cost']:.9g}")
    elif command == "report":
        lines.append("report written")
    return lines


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    scenario_path = Path(args.scenario)
    try:
        doc = json.loads(scenario_path.read_text())
    except FileNotFoundError:
        print(f"error: scenario file not found: {scenario_path}", file=sys.stderr)
        return EXIT_INVALID
    except json.JSONDecodeError as exc:
        print(f"error: scenario is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_INVALID

    overrides = {}
    if args.grid_n is not None:
        overrides["grid_n"] = args.grid_n
    if args.tol is not None:
        overrides["tol"] = args.tol
    if args.seed is not None:
        overrides["seed"] = args.seed
    payload: dict = {"scenario": doc}
    if overrides:
        payload["overrides"] = overrides

    if args.command == "reduce":
        hedge_path = doc.get("superhedge_path")
        if not hedge_path:
            print("error: reduce needs 'superhedge_path' in the scenario",
                  file=sys.stderr)
            return EXIT_INVALID
        hp = Path(hedge_path)
        if not hp.is_absolute():
            hp = scenario_path.parent / hp
        try:
            payload["superhedge"] = hp.read_text()
        except FileNotFoundError:
            print(f"error: superhedge file not found: {hp}", file=sys.stderr)
            return EXIT_INVALID

    client = ServiceClient(args.server)
    try:
        status, body = client.post(f"/v1/{args.command}", payload)
    except httpx.HTTPError as exc:
        print(f"error: service unreachable: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    if status != 200:
        kind = body.get("error_kind", "numerical-failure")
        detail = body.get("detail", str(body))
        print(f"error [{kind}]: {detail}", file=sys.stderr)
        return _KIND_TO_EXIT.get(kind, EXIT_NUMERICAL)

    out_dir = Path(args.out) if args.out else scenario_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    report = body["report"]
    report_name = f"{scenario_path.stem}.{args.command}.json"
    (out_dir / report_name).write_text(dumps_report(report))
    for name, text in body.get("files", {}).items():
        (out_dir / f"{scenario_path.stem}.{name}").write_text(text)
    if args.command == "reduce":
        (out_dir / f"{scenario_path.stem}.collapsed.csv").write_text(
            body["superhedge"])

    for line in _summary_lines(args.command, report):
        print(line)
    print(f"wrote {out_dir / report_name}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
