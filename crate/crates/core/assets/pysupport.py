"""Python-side support for ragtest.

Modes:
  serve                      JSON-lines request loop on stdin/stdout
  run SUITE ROOT COV RESULTS execute a test file with line tracing
"""
import ast
import json
import os
import sys

TESTCASE_BASES = {"TestCase", "IsolatedAsyncioTestCase"}


def _is_docstring(node):
    return (
        isinstance(node, ast.Expr)
        and isinstance(node.value, ast.Constant)
        and isinstance(node.value.value, str)
    )


def _base_name(expr):
    if isinstance(expr, ast.Name):
        return expr.id
    if isinstance(expr, ast.Attribute):
        return expr.attr
    return None


def discover_tests(tree):
    classes = [n for n in tree.body if isinstance(n, ast.ClassDef)]
    test_classes = set()
    changed = True
    while changed:
        changed = False
        for c in classes:
            if c.name in test_classes:
                continue
            bases = {_base_name(b) for b in c.bases}
            if bases & TESTCASE_BASES or bases & test_classes:
                test_classes.add(c.name)
                changed = True
    pairs = []
    for c in classes:
        if c.name not in test_classes:
            continue
        for item in c.body:
            if isinstance(item, (ast.FunctionDef, ast.AsyncFunctionDef)) and item.name.startswith("test"):
                pairs.append((c.name, item.name))
    counts = {}
    for _, m in pairs:
        counts[m] = counts.get(m, 0) + 1
    names = []
    for c, m in pairs:
        name = m if counts[m] == 1 else "%s.%s" % (c, m)
        if name not in names:
            names.append(name)
    return names


def analyze_source(source):
    if not source.strip():
        return {"parse_ok": False, "tests": [], "error": "empty source"}
    try:
        tree = ast.parse(source)
    except (SyntaxError, ValueError) as exc:
        return {"parse_ok": False, "tests": [], "error": "%s: %s" % (type(exc).__name__, exc)}
    if not tree.body:
        return {"parse_ok": False, "tests": [], "error": "no statements"}
    return {"parse_ok": True, "tests": discover_tests(tree), "error": None}


_BODY_FIELDS = ("body", "orelse", "finalbody")


def line_model(source):
    """Executable statement lines plus a map from every physical line of a
    statement header to the line the statement starts on."""
    tree = ast.parse(source)
    executable = set()
    owner = {}

    def visit(body, allow_docstring):
        for i, node in enumerate(body):
            if i == 0 and allow_docstring and _is_docstring(node):
                continue
            start = node.lineno
            executable.add(start)
            children = []
            for field in _BODY_FIELDS:
                value = getattr(node, field, None)
                if isinstance(value, list) and value and isinstance(value[0], ast.stmt):
                    children.append(value)
            handlers = getattr(node, "handlers", None) or []
            cases = getattr(node, "cases", None) or []
            if children or handlers or cases:
                first = min(
                    [b[0].lineno for b in children]
                    + [h.lineno for h in handlers]
                    + [c.pattern.lineno for c in cases]
                )
                header_end = max(start, first - 1)
            else:
                header_end = node.end_lineno or start
            for line in range(start, header_end + 1):
                owner.setdefault(line, start)
            for dec in getattr(node, "decorator_list", []):
                for line in range(dec.lineno, (dec.end_lineno or dec.lineno) + 1):
                    owner[line] = start
            is_scope = isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef))
            for b in children:
                visit(b, is_scope and b is node.body)
            for h in handlers:
                executable.add(h.lineno)
                owner.setdefault(h.lineno, h.lineno)
                visit(h.body, False)
            for c in cases:
                visit(c.body, False)

    visit(tree.body, True)
    return executable, owner


def class_span(source, class_name):
    tree = ast.parse(source)
    for node in ast.walk(tree):
        if isinstance(node, ast.ClassDef) and node.name == class_name:
            start = min([node.lineno] + [d.lineno for d in node.decorator_list])
            return [start, node.end_lineno]
    return None


def _read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def serve():
    for raw in sys.stdin:
        raw = raw.strip()
        if not raw:
            continue
        try:
            req = json.loads(raw)
            op = req.get("op")
            if op == "analyze":
                resp = analyze_source(req["source"])
            elif op == "line_model":
                executable, _ = line_model(_read(req["path"]))
                resp = {"executable": sorted(executable)}
            elif op == "class_span":
                resp = {"span": class_span(_read(req["path"]), req["class_name"])}
            else:
                resp = {"error": "unknown op %r" % (op,)}
        except Exception as exc:  # report, keep serving
            resp = {"error": "%s: %s" % (type(exc).__name__, exc)}
        sys.stdout.write(json.dumps(resp) + "\n")
        sys.stdout.flush()


def run(suite_path, source_root, coverage_out, results_out):
    import runpy
    import threading
    import traceback
    import unittest

    root = os.path.realpath(source_root) + os.sep
    executed = {}
    resolved = {}

    def files_set(filename):
        if filename not in resolved:
            real = os.path.realpath(filename) if filename and not filename.startswith("<") else ""
            resolved[filename] = executed.setdefault(real, set()) if real.startswith(root) else None
        return resolved[filename]

    def global_trace(frame, event, arg):
        lines = files_set(frame.f_code.co_filename)
        if lines is None:
            return None

        def local(frame, event, arg):
            if event == "line":
                lines.add(frame.f_lineno)
            return local

        return local

    outcomes = {}

    class RecordingResult(unittest.TextTestResult):
        def _mark(self, test, status):
            outcomes[test.id()] = status

        def addSuccess(self, test):
            super().addSuccess(test)
            self._mark(test, "passed")

        def addFailure(self, test, err):
            super().addFailure(test, err)
            self._mark(test, "failed")

        def addError(self, test, err):
            super().addError(test, err)
            self._mark(test, "errored")

        def addSkip(self, test, reason):
            super().addSkip(test, reason)
            self._mark(test, "passed")

        def addExpectedFailure(self, test, err):
            super().addExpectedFailure(test, err)
            self._mark(test, "passed")

        def addUnexpectedSuccess(self, test):
            super().addUnexpectedSuccess(test)
            self._mark(test, "failed")

    unittest.TextTestRunner.resultclass = RecordingResult

    suite_path = os.path.abspath(suite_path)
    sys.argv = [suite_path]
    sys.path[0] = os.path.dirname(suite_path)
    exit_code = 0
    threading.settrace(global_trace)
    sys.settrace(global_trace)
    try:
        runpy.run_path(suite_path, run_name="__main__")
    except SystemExit as exc:
        exit_code = exc.code if isinstance(exc.code, int) else (0 if exc.code is None else 1)
    except BaseException:
        traceback.print_exc()
        exit_code = 1
    finally:
        sys.settrace(None)
        threading.settrace(None)

    files = {}
    for real, lines in sorted(executed.items()):
        try:
            executable, owner = line_model(_read(real))
        except (OSError, SyntaxError, ValueError):
            continue
        hit = {owner.get(l, l) for l in lines} & executable
        files[os.path.relpath(real, root).replace(os.sep, "/")] = {
            "executed": sorted(hit),
            "executable": sorted(executable),
        }
    with open(coverage_out, "w", encoding="utf-8") as fh:
        json.dump({"files": files}, fh, sort_keys=True)
    with open(results_out, "w", encoding="utf-8") as fh:
        json.dump({"tests": outcomes}, fh, sort_keys=True)
    sys.stdout.flush()
    sys.stderr.flush()
    os._exit(exit_code if isinstance(exit_code, int) else 1)


if __name__ == "__main__":
    mode = sys.argv[1] if len(sys.argv) > 1 else ""
    if mode == "serve":
        serve()
    elif mode == "run":
        run(*sys.argv[2:6])
    else:
        sys.stderr.write(__doc__)
        sys.exit(2)
