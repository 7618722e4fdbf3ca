"""Stand-in executor speaking the line-delimited JSON protocol.

Replies are canned from the snippet file's first line so tests can steer
them.  ``garble`` answers the first request with noise (then behaves), and
``die`` exits without answering.
"""

import ast
import json
import os
import sys

GARBLE_MARK = os.environ.get("FAKE_EXECUTOR_MARK", "")


def detect(path):
    src = open(path).read()
    runtimes = []
    try:
        ast.parse(src)
        runtimes.append("3")
    except SyntaxError:
        pass
    if "print " in src or not src.strip() or "3" in runtimes:
        runtimes.insert(0, "2")
    imports = []
    for line in src.splitlines():
        if line.startswith("import "):
            imports.append(line.split()[1])
    return {"runtimes": runtimes, "imports": imports}


def validate(req):
    head = open(req["snippet"]).readline().strip()
    if head == "# ok":
        return {"status": "success", "snippet_line": 3, "install_failures": [], "trace": []}
    if head == "# loop":
        return {"status": "timeout", "snippet_line": 1, "install_failures": []}
    if head == "# bad":
        return {"status": "exception", "exception_name": "", "trace": []}
    pins = dict(req["deps"])
    return {
        "status": "exception",
        "exception_name": "ImportError",
        "message": "cannot import name 'downsample'",
        "trace": [{"origin": "snippet", "line": 5}, {"origin": "dependency", "package": "Lasagne", "line": 6}],
        "snippet_line": 5,
        "install_failures": [["Theano", "pinned " + pins.get("Theano", "?")]],
    }


for line in sys.stdin:
    req = json.loads(line)
    if req.get("snippet", "").endswith("die.py"):
        sys.exit(1)
    if GARBLE_MARK and not os.path.exists(GARBLE_MARK):
        open(GARBLE_MARK, "w").close()
        print("%% not json %%", flush=True)
        continue
    reply = detect(req["snippet"]) if req["op"] == "detect" else validate(req)
    print(json.dumps(reply), flush=True)
