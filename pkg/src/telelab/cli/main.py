"""telelab-cli: the student's terminal client.

Exit codes: 0 ok, 2 auth, 3 script timeout, 4 connection.
"""

from __future__ import annotations

import sys

import click

from telelab.bus.client import AuthFailed, BrokenConnection, BusClient, ClientError, Expired
from telelab.bus.protocol import encode_frame
from telelab.cli.recording import Recorder, replay as replay_frames, summarize
from telelab.cli.script import ScriptError, ScriptTimeout, load_script, run_script

TELEOP_HELP = """\
w/s: forward/back +-0.1 m/s   a/d: turn +-0.2 rad/s   x: stop
g: gripper close              r: gripper open         q: quit
"""


@click.group()
def cli() -> None:
    """Remote testbed client."""


@cli.group()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=7447, show_default=True, type=int)
@click.option("--token", envvar="TELELAB_TOKEN", required=True,
              help="Session token (or set TELELAB_TOKEN).")
@click.pass_context
def connect(ctx: click.Context, host: str, port: int, token: str) -> None:
    """Authenticate a session and run a subcommand against it."""
    ctx.obj = {"host": host, "port": port, "token": token}


def _open(ctx: click.Context) -> BusClient:
    cfg = ctx.obj
    try:
        client = BusClient(cfg["host"], cfg["port"], cfg["token"])
    except (AuthFailed, Expired) as e:
        click.echo(f"auth failed: {e}", err=True)
        sys.exit(2)
    except BrokenConnection as e:
        click.echo(f"connection failed: {e}", err=True)
        sys.exit(4)
    g = client.grant
    click.echo(f"connected: namespace={client.namespace} mode={g['mode']}")
    click.echo(f"  pub: {', '.join(g['allowed_pub'])}")
    click.echo(f"  sub: {', '.join(g['allowed_sub'])}")
    return client


@connect.command()
@click.pass_context
def teleop(ctx: click.Context) -> None:
    """Interactive velocity keying (line-based)."""
    client = _open(ctx)
    click.echo(TELEOP_HELP)
    vx, wz = 0.0, 0.0
    try:
        while True:
            key = click.prompt("", prompt_suffix="> ", default="", show_default=False)
            for ch in key or "x":
                if ch == "q":
                    client.publish("cmd_vel", "Twist", {"vx": 0.0, "wz": 0.0})
                    return
                if ch == "w":
                    vx += 0.1
                elif ch == "s":
                    vx -= 0.1
                elif ch == "a":
                    wz += 0.2
                elif ch == "d":
                    wz -= 0.2
                elif ch == "x":
                    vx, wz = 0.0, 0.0
                elif ch == "g":
                    client.publish("gripper", "GripperCmd", {"engage": True})
                    continue
                elif ch == "r":
                    client.publish("gripper", "GripperCmd", {"engage": False})
                    continue
                else:
                    continue
                client.publish("cmd_vel", "Twist", {"vx": round(vx, 3), "wz": round(wz, 3)})
            click.echo(f"  vx={vx:+.2f} wz={wz:+.2f}")
    except BrokenConnection as e:
        click.echo(f"connection lost: {e}", err=True)
        sys.exit(4)
    finally:
        client.close()


@connect.command()
@click.argument("topic")
@click.option("--count", default=0, help="Stop after N frames (0 = forever).")
@click.pass_context
def echo(ctx: click.Context, topic: str, count: int) -> None:
    """Stream frames from TOPIC to stdout in wire format."""
    client = _open(ctx)
    full = client.topic(topic)
    client.subscribe(topic if not topic.startswith("/") else topic)
    seen = 0
    try:
        while count == 0 or seen < count:
            env = client.wait_for(full, lambda p: True, timeout_s=3600.0)
            if env is None:
                continue
            sys.stdout.write(encode_frame(env).decode())
            sys.stdout.flush()
            seen += 1
    except BrokenConnection as e:
        click.echo(f"connection lost: {e}", err=True)
        sys.exit(4)
    except KeyboardInterrupt:
        pass
    finally:
        client.close()


@connect.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--record", "record_path", type=click.Path(dir_okay=False),
              help="Also record all traffic to this file.")
@click.pass_context
def run(ctx: click.Context, file: str, record_path: str | None) -> None:
    """Execute a script FILE of timed publishes and predicate waits."""
    try:
        steps = load_script(file)
    except (ScriptError, OSError, ValueError) as e:
        click.echo(f"bad script: {e}", err=True)
        sys.exit(1)
    client = _open(ctx)
    recorder = Recorder(client, record_path) if record_path else None
    try:
        run_script(client, steps, log=lambda m: click.echo(m))
        click.echo("script complete")
    except ScriptTimeout as e:
        click.echo(f"script timeout: {e}", err=True)
        sys.exit(3)
    except BrokenConnection as e:
        click.echo(f"connection lost: {e}", err=True)
        sys.exit(4)
    finally:
        if recorder is not None:
            recorder.close()
        client.close()


@connect.command()
@click.argument("file", type=click.Path(dir_okay=False))
@click.option("--duration", default=0.0, help="Stop after this many seconds (0 = until Ctrl-C).")
@click.pass_context
def record(ctx: click.Context, file: str, duration: float) -> None:
    """Record all session traffic to FILE (subscribes to every granted topic)."""
    import time as _time

    client = _open(ctx)
    recorder = Recorder(client, file)
    for rel in client.grant["allowed_sub"]:
        if not rel.endswith("/**"):
            client.subscribe(rel)
    click.echo(f"recording to {file} (Ctrl-C to stop)")
    try:
        t0 = _time.monotonic()
        while duration == 0.0 or _time.monotonic() - t0 < duration:
            _time.sleep(0.1)
    except KeyboardInterrupt:
        pass
    finally:
        recorder.close()
        client.close()
    click.echo(f"saved: {summarize(file)}")


@connect.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def replay(ctx: click.Context, file: str) -> None:
    """Re-publish a recording's sent frames at their original offsets."""
    client = _open(ctx)
    try:
        n = replay_frames(client, file, log=lambda m: None)
        click.echo(f"replayed {n} frames")
    except BrokenConnection as e:
        click.echo(f"connection lost: {e}", err=True)
        sys.exit(4)
    except (ValueError, ClientError) as e:
        click.echo(f"replay failed: {e}", err=True)
        sys.exit(1)
    finally:
        client.close()


if __name__ == "__main__":
    cli()
