"""Command-line client for the simulator service.

The CLI speaks HTTP to the service: by default requests run against an
in-process application instance (no network involved); pass ``--server`` to
target a running instance instead. Output files are written client-side from
the response payloads, so a failed request never leaves partial outputs.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys
from pathlib import Path

import httpx

OUT_DIR_ENV = "SURGEBENCH_OUT"


def _post(server: str | None, path: str, payload: dict) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=600.0) as client:
            return client.post(path, json=payload)

    async def _run() -> httpx.Response:
        from .service import app

        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://surgebench") as client:
            return await client.post(path, json=payload, timeout=None)

    return asyncio.run(_run())


def _fail(response: httpx.Response) -> int:
    try:
        detail = response.json().get("detail", response.text)
    except ValueError:
        detail = response.text
    print(f"error: {detail}", file=sys.stderr)
    return 1


def _resolve_out_dir(flag_value: str | None, default: str = "out") -> Path:
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return Path(env)
    return Path(flag_value) if flag_value else Path(default)


def _write(out_dir: Path, names_to_text: dict[str, str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in names_to_text.items():
        (out_dir / name).write_text(text)
        print(f"wrote {out_dir / name}")


def _scenario_payload(path_arg: str, seed: int | None) -> dict:
    from .scenario import ScenarioError, bundled_scenario_names

    given = Path(path_arg)
    files: dict[str, str] = {}
    if given.exists():
        text = given.read_text()
        # Inline any file the scenario references so the request is self-contained.
        for line in text.splitlines():
            stripped = line.strip()
            if stripped.startswith("file") and "=" in stripped:
                name = stripped.split("=", 1)[1].split("#")[0].split(";")[0].strip()
                candidate = Path(name)
                if not candidate.is_absolute():
                    candidate = given.parent / candidate
                if candidate.exists():
                    files[name] = candidate.read_text()
    elif given.name in bundled_scenario_names():
        import importlib.resources

        text = importlib.resources.files("surgebench.data").joinpath(given.name).read_text()
    else:
        raise ScenarioError(f"scenario file {path_arg} does not exist")
    payload: dict = {"scenario": text, "files": files}
    if seed is not None:
        payload["seed"] = seed
    return payload


def cmd_simulate(args: argparse.Namespace) -> int:
    from .scenario import ScenarioError

    try:
        payload = _scenario_payload(args.scenario, args.seed)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    response = _post(args.server, "/simulate", payload)
    if response.status_code != 200:
        return _fail(response)
    body = response.json()
    out_dir = _resolve_out_dir(args.out)
    _write(out_dir, {
        "trace.csv": body["trace_csv"],
        "horizon_report.csv": body["horizon_csv"],
        "disturbance_knots.csv": body["profile_csv"],
        "summary.txt": body["summary_text"],
    })
    print(body["summary_text"], end="")
    return 0


def cmd_step_study(args: argparse.Namespace) -> int:
    payload = {
        "controller_id": args.controller,
        "step": args.step,
        "qw_gain": args.qw_gain,
        "qi_gain": args.qi_gain,
        "duration_hours": args.duration,
        "dt": args.dt,
        "step_time_hours": args.step_time,
    }
    response = _post(args.server, "/step-study", payload)
    if response.status_code != 200:
        return _fail(response)
    body = response.json()
    out_dir = _resolve_out_dir(args.out)
    _write(out_dir, {
        "step_response.csv": body["response_csv"],
        "step_summary.txt": body["summary_text"],
    })
    print(body["summary_text"], end="")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    payload: dict = {}
    if args.model:
        path = Path(args.model)
        if not path.exists():
            print(f"error: model file {args.model} does not exist", file=sys.stderr)
            return 1
        try:
            payload["system"] = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            print(f"error: model file {args.model}: {exc}", file=sys.stderr)
            return 1
    response = _post(args.server, "/analyze", payload)
    if response.status_code != 200:
        return _fail(response)
    body = response.json()
    out_dir = _resolve_out_dir(args.out)
    _write(out_dir, {
        "analysis_report.txt": body["report"],
        "plant_singular_values.csv": body["plant_sweep_csv"],
        "disturbance_singular_values.csv": body["disturbance_sweep_csv"],
        "rejection_index.csv": body["rejection_csv"],
    })
    print(body["report"], end="")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("surgebench.service:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surgebench",
        description="Surge-tank control platform simulator (thin client).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a platform scenario")
    sim.add_argument("scenario", help="scenario file path (or a bundled name "
                                      "such as canonical.scenario)")
    sim.add_argument("--out", help="output directory (default ./out; "
                                   f"env {OUT_DIR_ENV} overrides)")
    sim.add_argument("--seed", type=int, help="disturbance profile seed override")
    sim.add_argument("--server", help="base URL of a running service")
    sim.set_defaults(func=cmd_simulate)

    step = sub.add_parser("step-study", help="single-controller disturbance step study")
    step.add_argument("--controller", type=int, required=True,
                      help="controller id (0 PI, 1 inverse, 2 linear MPC, 3 nonlinear MPC)")
    step.add_argument("--step", type=float, required=True,
                      help="feed-density step size, t/m^3")
    step.add_argument("--qw-gain", type=float, default=1.0,
                      help="water actuator gain multiplier (1.1 = +10%%)")
    step.add_argument("--qi-gain", type=float, default=1.0,
                      help="product actuator gain multiplier")
    step.add_argument("--duration", type=float, default=1.0, help="run length, hours")
    step.add_argument("--dt", type=float, default=0.002, help="sampling period, hours")
    step.add_argument("--step-time", type=float, default=0.1,
                      help="when the disturbance steps, hours")
    step.add_argument("--out", help="output directory")
    step.add_argument("--server", help="base URL of a running service")
    step.set_defaults(func=cmd_step_study)

    ana = sub.add_parser("analyze", help="input/output controllability report")
    ana.add_argument("--model", help="JSON file with a/b/gd (c optional) matrices; "
                                     "omit for the built-in tank model")
    ana.add_argument("--out", help="output directory")
    ana.add_argument("--server", help="base URL of a running service")
    ana.set_defaults(func=cmd_analyze)

    srv = sub.add_parser("serve", help="run the HTTP service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000)
    srv.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
