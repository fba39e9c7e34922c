"""Test worker speaking the line protocol. The first argument picks a behavior."""
import json
import os
import sys
import time

mode = sys.argv[1] if len(sys.argv) > 1 else "echo"
marker = sys.argv[2] if len(sys.argv) > 2 else None


def send(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


if mode == "no-handshake":
    time.sleep(30)
if mode == "bad-protocol":
    send({"protocol": 99, "name": "future"})
else:
    send({"protocol": 1, "name": "fixture-" + mode})

for line in sys.stdin:
    req = json.loads(line)
    tid = req["trial_id"]
    if mode == "echo":
        x = req["config"].get("x1", 0.0)
        send({"trial_id": tid, "status": "ok", "objective": x * x + req["fidelity"] / 1000.0,
              "cost_minutes": 3.5, "message": "pid %d" % os.getpid()})
    elif mode == "fixed":
        send({"trial_id": tid, "status": "ok", "objective": 0.42, "cost_minutes": 3.5})
    elif mode == "mismatch":
        send({"trial_id": tid + 1, "status": "ok", "objective": 0.1, "cost_minutes": 1.0})
    elif mode == "silent":
        time.sleep(30)
    elif mode == "crash":
        sys.stderr.write("out of memory\n")
        sys.stderr.flush()
        sys.exit(3)
    elif mode == "garbage":
        sys.stdout.write("this is not json\n")
        sys.stdout.flush()
    elif mode == "crash-once":
        if not os.path.exists(marker):
            open(marker, "w").close()
            sys.exit(1)
        send({"trial_id": tid, "status": "ok", "objective": 0.25, "cost_minutes": 2.0})
    elif mode == "reports-failure":
        send({"trial_id": tid, "status": "failed", "cost_minutes": 0.5, "message": "spatial collapse"})
    elif mode == "slow":
        time.sleep(0.3)
        send({"trial_id": tid, "status": "ok", "objective": 0.5, "cost_minutes": 0.3,
              "message": "pid %d" % os.getpid()})
