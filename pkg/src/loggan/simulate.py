"""Seeded simulators for realistic log corpora.

``simulate_cbs`` writes Windows Component-Based-Servicing style lines
(``2016-09-28 04:30:31, Info                  CBS    Starting ...``) as a
stand-in for a real CBS dump. ``simulate_app`` writes three-field lines
with process-lifecycle event codes whose ordering is causally constrained,
so coherence rules have something to find.
"""

from __future__ import annotations

import random
from datetime import datetime, timedelta
from pathlib import Path

_SESSION_HEAD = [
    ("Info", "CBS", "TI: --- Initializing Trusted Installer ---"),
    ("Info", "CBS", "TI: Last boot time: {boot}"),
    ("Info", "CBS", "Starting TrustedInstaller initialization."),
    ("Info", "CBS", "Loaded Servicing Stack v6.1.7601.{build} with Core: "
                    "C:\\Windows\\winsxs\\amd64_microsoft-windows-servicingstack_31bf3856ad364e35_6.1.7601.{build}"
                    "_none_681aa442f6fed7f0\\cbscore.dll"),
    ("Info", "CSI", "00000001@{csidate} WcpInitialize (wcp.dll version 0.0.0.6) called (stack @0x7fef26dc2f9 @0x7fef2b2c11d)"),
    ("Info", "CBS", "Ending TrustedInstaller initialization."),
    ("Info", "CBS", "Starting the TrustedInstaller main loop."),
    ("Info", "CBS", "TrustedInstaller service starts successfully."),
    ("Info", "CBS", "SQM: Initializing online with Windows opt-in: False"),
    ("Info", "CBS", "SQM: Cleaning up report files older than 10 days."),
    ("Info", "CBS", "SQM: Requesting upload of all unsent reports."),
    ("Info", "CBS", "SQM: Failed to start upload with file pattern: C:\\Windows\\servicing\\sqm\\*_std.sqm, "
                    "flags: 0x2 [HRESULT = 0x80004005 - E_FAIL]"),
    ("Info", "CBS", "SQM: Failed to start standard sample upload. [HRESULT = 0x80004005 - E_FAIL]"),
    ("Info", "CBS", "NonStart: Checking to ensure startup processing was not required."),
    ("Info", "CBS", "NonStart: Success, startup processing not required as expected."),
    ("Info", "CBS", "Startup processing thread terminated normally"),
    ("Info", "CSI", "00000002 CSI Store {store} (0x00000000{storehex}) initialized"),
]

_SESSION_BODY = [
    (40, "Info", "CBS", "Read out cached package applicability for package: Package_for_KB{kb}~31bf3856ad364e35~amd64~~6.1.{minor}.{rev}, "
                        "ApplicableState: {state}, CurrentState:{state}"),
    (10, "Info", "CBS", "Session: {session} initialized by client WindowsUpdateAgent."),
    (6, "Info", "CBS", "Session: {session} finalized. Reboot required: no [HRESULT = 0x00000000 - S_OK]"),
    (4, "Info", "CBS", "Failed to get session package state [HRESULT = 0x800f0805 - CBS_E_INVALID_PACKAGE]"),
    (3, "Info", "CBS", "Exec: Processing started.  Client: WindowsUpdateAgent, Session(Root): {session}, Package: Package_for_KB{kb}~31bf3856ad364e35~amd64~~6.1.{minor}.{rev}"),
    (3, "Info", "CBS", "Appl: Evaluating package applicability for package Package_for_KB{kb}~31bf3856ad364e35~amd64~~6.1.{minor}.{rev}, applicable state: {state}"),
    (2, "Warning", "CSI", "0000000{csin} Warning: Overlap: Duplicate ownership for directory \\??\\C:\\Windows\\System32\\{dir} in component {comp}"),
    (2, "Error", "CBS", "Failed to internally open package. [HRESULT = 0x800f0805 - CBS_E_INVALID_PACKAGE]"),
    (1, "Error", "CBS", "Failed to resolve package 'Package_for_KB{kb}~31bf3856ad364e35~amd64~~6.1.{minor}.{rev}' [HRESULT = 0x800f080c - CBS_E_UNKNOWN_UPDATE]"),
    (2, "Info", "CBS", "Scavenge: Starts"),
    (2, "Info", "CBS", "Scavenge: Completed, disposition: 0x1"),
]

_SESSION_TAIL = [
    ("Info", "CBS", "Trusted Installer is shutting down because: SHUTDOWN_REASON_AUTOSTOP"),
    ("Info", "CBS", "TiWorker signaled for shutdown, going to exit."),
    ("Info", "CBS", "Ending the TrustedInstaller main loop."),
    ("Info", "CBS", "Starting TrustedInstaller finalization."),
    ("Info", "CBS", "Ending TrustedInstaller finalization."),
]

_DIRS = ["drivers", "wbem", "en-US", "catroot", "spool", "Tasks", "LogFiles"]
_COMPS = ["Microsoft-Windows-Foundation", "Microsoft-Windows-Kernel", "Microsoft-Windows-Shell32",
          "Microsoft-Windows-TCPIP", "Microsoft-Windows-Security-SPP"]


def _cbs_line(ts: datetime, level: str, component: str, message: str) -> str:
    return f"{ts:%Y-%m-%d %H:%M:%S}, {level:<22}{component:<7}{message}"


def simulate_cbs(n: int, seed: int = 0, start: datetime = datetime(2016, 9, 28, 4, 30, 30)) -> list[str]:
    """``n`` CBS-style lines in ascending time order, deterministic per seed."""
    rng = random.Random(seed)
    kbs = [rng.randint(2500000, 3200000) for _ in range(60)]
    weights = [w for w, *_ in _SESSION_BODY]
    out: list[str] = []
    ts = start
    while len(out) < n:
        session = f"{rng.randint(30000000, 30999999)}_{rng.randint(1000000000, 3999999999)}"
        fill = {
            "boot": f"{ts - timedelta(hours=rng.randint(1, 30)):%Y-%m-%d %H:%M:%S}.{rng.randint(0, 999):03d}",
            "build": rng.choice(["23505", "23403", "18741"]),
            "csidate": f"{ts.year}/{ts.month}/{ts.day}:{ts:%H:%M:%S}.{rng.randint(0, 999):03d}",
            "store": rng.randint(1000000, 9999999),
            "storehex": f"{rng.randint(0, 0xFFFFFF):08x}",
        }
        lines = [(lv, cp, msg.format(**fill)) for lv, cp, msg in _SESSION_HEAD]
        for _ in range(rng.randint(20, 80)):
            _, lv, cp, msg = rng.choices(_SESSION_BODY, weights)[0]
            if rng.random() < 0.3:
                session = f"{rng.randint(30000000, 30999999)}_{rng.randint(1000000000, 3999999999)}"
            lines.append((lv, cp, msg.format(
                kb=rng.choice(kbs), minor=rng.randint(1, 3), rev=rng.randint(0, 9),
                state=rng.choice([0, 80, 112]), session=session, csin=rng.randint(3, 9),
                dir=rng.choice(_DIRS), comp=rng.choice(_COMPS))))
        lines.extend(_SESSION_TAIL)
        for lv, cp, msg in lines:
            if len(out) >= n:
                break
            out.append(_cbs_line(ts, lv, cp, msg))
            r = rng.random()
            ts += timedelta(seconds=0 if r < 0.6 else rng.randint(1, 3) if r < 0.95 else rng.randint(4, 90))
        ts += timedelta(minutes=rng.randint(20, 600))
    return out


_APP_STEPS = {
    "PSTART": "Process {pid} started: {exe}",
    "PREAD": "Process {pid} read {path}",
    "PWRITE": "Process {pid} wrote {n} bytes to {path}",
    "EFR": "Could not access file {path}",
    "EFW": "Write failed on {path}",
    "PCRASH": "Process {pid} terminated unexpectedly with code 0x{code:08x}",
    "PSTOP": "Process {pid} exited normally",
}
_EXES = ["svchost.exe", "backup.exe", "indexer.exe", "updater.exe", "agent.exe"]
_PATHS = ["C:\\data\\report.csv", "C:\\temp\\cache.bin", "D:\\archive\\2021.zip", "C:\\logs\\app.log",
          "C:\\Users\\admin\\notes.txt"]


def simulate_app(n: int, seed: int = 0, start: datetime = datetime(2021, 8, 30, 10, 49, 58)) -> list[str]:
    """``n`` compact-timestamp lines from interleaved process lifecycles.

    Every process emits PSTART first, then reads/writes/failures, then PSTOP
    or PCRASH, so PSTART precedes every other code in any prefix of the file.
    """
    rng = random.Random(seed)
    out: list[str] = []
    ts = start
    live: dict[int, str] = {}
    while len(out) < n:
        if not live or (len(live) < 4 and rng.random() < 0.2):
            pid = rng.randint(1000, 9999)
            live[pid] = rng.choice(_EXES)
            code, pid_ = "PSTART", pid
        else:
            pid_ = rng.choice(sorted(live))
            code = rng.choices(["PREAD", "PWRITE", "EFR", "EFW", "PSTOP", "PCRASH"], [30, 30, 5, 5, 8, 2])[0]
            if code in ("PSTOP", "PCRASH"):
                del live[pid_]
        msg = _APP_STEPS[code].format(pid=pid_, exe=live.get(pid_, "x"), path=rng.choice(_PATHS),
                                      n=rng.randint(1, 65536), code=rng.randint(1, 0xFFFF))
        out.append(f"{ts:%Y%m%dT%H%M%S} {code} {msg}")
        ts += timedelta(seconds=rng.choice([0, 0, 1, 1, 2, 5]))
    return out


def write_lines(path: str | Path, lines: list[str]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return p
