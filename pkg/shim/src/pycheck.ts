/**
 * Source checks on the plugin repository: syntax compilation, repo-internal
 * import resolution, and method registration.
 *
 * The repository under test is Python, so syntax and import analysis are
 * delegated to a short python3 helper; everything else stays in-process.
 */

import { spawnSync } from "node:child_process";
import { existsSync, readFileSync, readdirSync, statSync } from "node:fs";
import { join, relative } from "node:path";

export interface CheckResult {
  ok: boolean;
  stage?: string;
  file?: string;
  traceback?: string;
}

const PY_HELPER = String.raw`
import ast, json, os, sys

root = sys.argv[1]
files = []
for base, _dirs, names in os.walk(root):
    for name in sorted(names):
        if name.endswith(".py"):
            files.append(os.path.relpath(os.path.join(base, name), root))
files.sort()
modules = {f[:-3].replace(os.sep, ".") for f in files}

def fail(stage, path, msg):
    print(json.dumps({"ok": False, "stage": stage, "file": path, "traceback": msg}))
    sys.exit(0)

for path in files:
    try:
        with open(os.path.join(root, path), "r", encoding="utf-8") as fh:
            tree = ast.parse(fh.read(), filename=path)
    except SyntaxError as exc:
        fail("import", path, f"SyntaxError: {exc.msg} (line {exc.lineno})")
    package = path.replace(os.sep, ".")[:-3].rsplit(".", 1)[0] if "." in path.replace(os.sep, ".")[:-3] else ""
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom) and node.level > 0:
            parts = package.split(".") if package else []
            up = node.level - 1
            if up > len(parts):
                fail("import", path, f"ImportError: relative import beyond top level")
            base = parts[: len(parts) - up] if up else parts
            target = ".".join(base + ([node.module] if node.module else []))
            if target not in modules:
                fail("import", path, f"ModuleNotFoundError: No module named '.{node.module or ''}'")
print(json.dumps({"ok": True}))
`;

export function listPythonFiles(repoDir: string): string[] {
  const out: string[] = [];
  const walk = (dir: string) => {
    for (const name of readdirSync(dir).sort()) {
      const full = join(dir, name);
      if (statSync(full).isDirectory()) walk(full);
      else if (name.endsWith(".py")) out.push(relative(repoDir, full));
    }
  };
  walk(repoDir);
  return out;
}

/** Syntax + relative-import resolution via the python helper. */
export function checkImports(repoDir: string): CheckResult {
  const proc = spawnSync("python3", ["-c", PY_HELPER, repoDir], {
    encoding: "utf-8",
    timeout: 60_000,
  });
  if (proc.error || proc.status !== 0 || !proc.stdout.trim()) {
    throw new Error(
      `python helper failed: ${proc.error ?? proc.stderr ?? `status ${proc.status}`}`,
    );
  }
  return JSON.parse(proc.stdout.trim()) as CheckResult;
}

/** A plugin registers itself by exporting a method descriptor. */
export function checkRegistered(repoDir: string): boolean {
  for (const file of listPythonFiles(repoDir)) {
    const text = readFileSync(join(repoDir, file), "utf-8");
    if (/(^|\n)\s*method_spec\s*=/.test(text)) return true;
  }
  return false;
}

/** Host mode needs the host framework importable in the python environment. */
export function hostFrameworkAvailable(): boolean {
  const proc = spawnSync("python3", ["-c", "import nerfstudio"], {
    encoding: "utf-8",
    timeout: 60_000,
  });
  return proc.status === 0;
}

export function repoExists(repoDir: string): boolean {
  return existsSync(repoDir) && statSync(repoDir).isDirectory();
}
