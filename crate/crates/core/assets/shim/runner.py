"""Run one candidate program on one input, as described by a JSON manifest.

Usage: python3 runner.py MANIFEST

Exit codes:
  0   the candidate finished and every post-hoc check held
  1   uncaught exception in the candidate (traceback on stderr)
  3   a post-hoc property check failed ("<prefix><id>:" on stderr)
  78  the manifest or the input could not be used ("PGS_SHIM_ERROR:" on stderr)

In FunctionCall mode the input is a Python argument list; the entry point is
called with it and repr(result) is printed. Anything the candidate prints
goes to stderr. In Stdio mode the candidate runs as __main__ with the input
on stdin.
"""

import ast
import copy
import io
import json
import sys

MANIFEST_VERSION = 1
VIOLATION_EXIT = 3
SETUP_ERROR_EXIT = 78
SETUP_MARKER = "PGS_SHIM_ERROR:"


def setup_error(message):
    sys.stderr.write("%s %s\n" % (SETUP_MARKER, message))
    sys.stderr.flush()
    sys.exit(SETUP_ERROR_EXIT)


def load_manifest(path):
    try:
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        if manifest.get("version", MANIFEST_VERSION) != MANIFEST_VERSION:
            raise ValueError("unsupported manifest version %r" % manifest.get("version"))
        mode = manifest["mode"]
        if mode not in ("FunctionCall", "Stdio"):
            raise ValueError("unknown mode %r" % mode)
        if mode == "FunctionCall" and not manifest.get("entry_point"):
            raise ValueError("FunctionCall mode requires entry_point")
        ids = [c["property_id"] for c in manifest.get("check_sources", [])]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate property ids in check_sources")
        for key in ("program_path", "input_path"):
            if not isinstance(manifest.get(key), str):
                raise ValueError("missing %s" % key)
        return manifest
    except Exception as exc:  # noqa: BLE001
        setup_error("manifest: %s" % exc)


def parse_args(text):
    text = text.strip()
    if not text:
        return ()
    src = "(" + text + ",)"
    try:
        return ast.literal_eval(src)
    except (ValueError, SyntaxError):
        pass
    try:
        return eval(compile(src, "<input>", "eval"), {"__builtins__": __builtins__}, {})
    except Exception as exc:  # noqa: BLE001
        setup_error("input: cannot parse argument list: %s" % exc)


def compile_checks(sources):
    checks = []
    for item in sources:
        pid = item["property_id"]
        namespace = {"__name__": "__pgs_check__"}
        exec(compile(item["code"], "<check %s>" % pid, "exec"), namespace)
        fn = namespace.get("check")
        if not callable(fn):
            raise NameError("check %s does not define check()" % pid)
        checks.append((pid, fn))
    return checks


def run_checks(checks, prefix, given, produced):
    for pid, fn in checks:
        detail = ""
        try:
            verdict = fn(copy.deepcopy(given), copy.deepcopy(produced))
            failed = verdict is not None and not bool(verdict)
        except AssertionError as exc:
            failed = True
            detail = str(exc)
        if failed:
            sys.stderr.write(
                "%s%s: property violated for input %r, output %r %s\n"
                % (prefix, pid, given, produced, detail)
            )
            sys.stderr.flush()
            sys.exit(VIOLATION_EXIT)


class LineTracer:
    def __init__(self, filename):
        self.filename = filename
        self.lines = set()

    def __call__(self, frame, event, arg):
        if frame.f_code.co_filename != self.filename:
            return None
        if event == "line":
            self.lines.add(frame.f_lineno)
        return self


def resolve_entry(namespace, entry):
    parts = entry.split(".")
    if parts[0] not in namespace:
        raise NameError("entry point %r is not defined" % parts[0])
    obj = namespace[parts[0]]
    for part in parts[1:]:
        if isinstance(obj, type):
            obj = obj()
        obj = getattr(obj, part)
    return obj


def main():
    if len(sys.argv) != 2:
        setup_error("usage: runner.py MANIFEST")
    manifest = load_manifest(sys.argv[1])
    program_path = manifest["program_path"]
    prefix = manifest.get("sentinel_prefix", "PGS_PV:")
    try:
        with open(program_path, encoding="utf-8") as fh:
            source = fh.read()
        with open(manifest["input_path"], "rb") as fh:
            raw_input = fh.read()
    except OSError as exc:
        setup_error("cannot read program or input: %s" % exc)

    checks = compile_checks(manifest.get("check_sources", []))
    tracer = LineTracer(program_path) if manifest.get("coverage") else None
    code = compile(source, program_path, "exec")
    real_stdout = sys.stdout

    try:
        if manifest["mode"] == "FunctionCall":
            args = parse_args(raw_input.decode("utf-8"))
            namespace = {"__name__": "__candidate__", "__file__": program_path}
            sys.stdout = sys.stderr
            if tracer:
                sys.settrace(tracer)
            try:
                exec(code, namespace)
                result = resolve_entry(namespace, manifest["entry_point"])(*copy.deepcopy(args))
            finally:
                sys.settrace(None)
                sys.stdout = real_stdout
            run_checks(checks, prefix, args, result)
            real_stdout.write(repr(result) + "\n")
        else:
            sys.stdin = io.TextIOWrapper(io.BytesIO(raw_input), encoding="utf-8")
            capture = None
            if checks:
                capture = io.TextIOWrapper(io.BytesIO(), encoding="utf-8", write_through=True)
                sys.stdout = capture
            namespace = {"__name__": "__main__", "__file__": program_path}
            if tracer:
                sys.settrace(tracer)
            try:
                exec(code, namespace)
            except SystemExit as exc:
                if exc.code not in (None, 0):
                    raise
            finally:
                sys.settrace(None)
                sys.stdout.flush()
                sys.stdout = real_stdout
            if capture is not None:
                produced = capture.buffer.getvalue()
                run_checks(checks, prefix, raw_input.decode("utf-8"), produced.decode("utf-8"))
                real_stdout.buffer.write(produced)
        real_stdout.flush()
    finally:
        if tracer:
            with open(manifest.get("coverage_path", "coverage.json"), "w") as fh:
                json.dump(sorted(tracer.lines), fh)


if __name__ == "__main__":
    main()
