"""Batch front end: parse a problem file, run checks, emit deterministic
reports.

Problem files are UTF-8 JSON with a versioned ``schema`` field; rationals
are encoded as strings like "3/2" to keep everything exact.  Every report
line carries a check identifier in brackets so CI can triage failures.
Exit codes: 0 all checks pass, 1 a check failed (with witness), 2 parse or
schema error.
"""

import argparse
import json
import os
import random
import sys
from fractions import Fraction
from typing import Dict, List, Optional

from . import dga, glue_params, strata, trees, vfc_algebra
from .counts import (CountTable, master_residual, residual_candidate_keys,
                     counts_to_module_map, module_map_to_counts, validate_counts)
from .errors import ChainLabError, NotAChainMap
from .orbits import OrbitUniverse, ReebOrbit, SimpleOrbitSeed

SCHEMA = "sft-chainlab/1"


class ProblemFileError(Exception):
    def __init__(self, message, location=""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


def _fraction(value, location) -> Fraction:
    try:
        if isinstance(value, str):
            return Fraction(value)
        if isinstance(value, int):
            return Fraction(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise ProblemFileError(f"bad rational {value!r}: {exc}", location)
    raise ProblemFileError(f"bad rational {value!r}", location)


def _orbit_key(raw, location):
    if not (isinstance(raw, (list, tuple)) and len(raw) == 2):
        raise ProblemFileError(f"orbit key must be [name, multiplicity]: {raw!r}",
                               location)
    return (str(raw[0]), int(raw[1]))


class ProblemFile:
    """Parsed problem file: universes, count tables, trees, run options."""

    def __init__(self, data: Dict, path: str = "<memory>"):
        self.path = path
        if data.get("schema") != SCHEMA:
            raise ProblemFileError(f"schema must be {SCHEMA!r}", f"{path}:schema")
        self.n: Optional[int] = data.get("n")
        self.class_rank: int = int(data.get("class_rank", 0))
        self.action_bound = _fraction(data.get("action_bound", "100"),
                                      f"{path}:action_bound")
        self.seed = int(data.get("seed", 0))
        self.universes: Dict[str, OrbitUniverse] = {}
        for uname, u in data.get("universes", {}).items():
            loc = f"{path}:universes.{uname}"
            seeds = []
            for s in u.get("seeds", []):
                seeds.append(SimpleOrbitSeed(
                    str(s["name"]), _fraction(s["action"], loc),
                    int(s.get("parity", 0)),
                    int(s.get("neg_eigenvalue_count_parity", 0)),
                    s.get("cz_index"),
                    tuple(s.get("homology_class", ()))))
            seed_by_name = {s.name: s for s in seeds}
            orbits = []
            for o in u.get("orbits", []):
                sname = str(o["seed"])
                if sname not in seed_by_name:
                    raise ProblemFileError(f"orbit references unknown seed {sname}",
                                           loc)
                orbits.append(ReebOrbit(seed_by_name[sname],
                                        int(o.get("multiplicity", 1)),
                                        o.get("cz_index")))
            try:
                self.universes[uname] = OrbitUniverse(seeds, orbits, self.n,
                                                      self.class_rank)
            except ChainLabError as exc:
                raise ProblemFileError(str(exc), loc)
        self.tables: Dict[str, CountTable] = {}
        raw_tables = data.get("tables", {})
        pending = dict(raw_tables)
        # two passes so companions can reference other tables
        for tname, t in raw_tables.items():
            self.tables[tname] = self._parse_table(tname, t)
        for tname, t in raw_tables.items():
            comps = {}
            for role, other in t.get("companions", {}).items():
                if other not in self.tables:
                    raise ProblemFileError(f"companion {other!r} not defined",
                                           f"{path}:tables.{tname}")
                comps[role] = self.tables[other]
            self.tables[tname].companions = comps
        self.trees: Dict[str, trees.DecoratedTree] = {}
        for name, t in data.get("trees", {}).items():
            self.trees[name] = self._parse_tree(name, t)

    def _universe(self, name, location) -> OrbitUniverse:
        if name not in self.universes:
            raise ProblemFileError(f"unknown universe {name!r}", location)
        return self.universes[name]

    def _parse_table(self, tname, t) -> CountTable:
        loc = f"{self.path}:tables.{tname}"
        flavor = t.get("flavor")
        if flavor not in ("I", "II", "III", "IV"):
            raise ProblemFileError(f"bad flavor {flavor!r}", loc)
        if flavor == "I":
            unis = {None: self._universe(t.get("universe", "default"), loc)}
        else:
            raw = t.get("universes", {})
            unis = {int(k): self._universe(v, loc) for k, v in raw.items()}
            needed = {"II": {0, 1}, "III": {0, 1}, "IV": {0, 1, 2}}[flavor]
            if set(unis) != needed:
                raise ProblemFileError(f"universes must cover levels {sorted(needed)}",
                                       loc)
        entries = {}
        for i, e in enumerate(t.get("entries", [])):
            eloc = f"{loc}.entries[{i}]"
            value = _fraction(e.get("value", 0), eloc)
            if flavor in ("I", "II"):
                key = self._conn_key(e, eloc)
            else:
                comps = e.get("components")
                if not isinstance(comps, list) or not comps:
                    raise ProblemFileError("set key needs a components list", eloc)
                key = tuple(self._conn_key(c, eloc) for c in comps)
            entries[key] = value
        try:
            return CountTable(flavor, unis, entries)
        except ChainLabError as exc:
            raise ProblemFileError(str(exc), loc)

    def _conn_key(self, e, loc):
        pos = _orbit_key(e.get("positive"), loc)
        negs = tuple(_orbit_key(k, loc) for k in e.get("negatives", []))
        beta = tuple(int(b) for b in e.get("beta", [0] * self.class_rank))
        if len(beta) != self.class_rank:
            raise ProblemFileError("beta rank mismatch", loc)
        return (pos, negs, beta)

    def _parse_tree(self, name, t) -> trees.DecoratedTree:
        loc = f"{self.path}:trees.{name}"
        flavor = t.get("flavor", "I")
        if flavor == "I":
            unis = {None: self._universe(t.get("universe", "default"), loc)}
        else:
            unis = {int(k): self._universe(v, loc)
                    for k, v in t.get("universes", {}).items()}
        if "positive" in t:
            # one-vertex shorthand
            uni = unis.get(None) or unis[min(unis)]
            key = self._conn_key(t, loc)
            tree = strata.one_vertex_tree(uni, key[0], key[1], key[2])
            return tree
        vertices = []
        vclass = {}
        vlevel = {}
        for v in t.get("vertices", []):
            vertices.append(str(v["name"]))
            vclass[v["name"]] = tuple(int(b) for b in
                                      v.get("beta", [0] * self.class_rank))
            if "level" in v:
                vlevel[v["name"]] = tuple(int(x) for x in v["level"])
        edges = []
        orbit = {}
        for e in t.get("edges", []):
            edge = trees.Edge(str(e["name"]), e.get("src"), e.get("dst"))
            edges.append(edge)
            key = _orbit_key(e.get("orbit"), loc)
            level = e.get("universe_level")
            if flavor == "I":
                uni = unis[None]
            elif level is not None:
                uni = unis[int(level)]
            else:
                raise ProblemFileError(f"edge {e['name']} needs universe_level", loc)
            try:
                orbit[edge.name] = uni.orbit(key)
            except ChainLabError as exc:
                raise ProblemFileError(str(exc), loc)
        tree = trees.DecoratedTree.make(flavor, vertices, edges, orbit, vclass,
                                        vlevel or None, t.get("s_label"))
        bad = trees.validate(tree)
        if bad:
            raise ProblemFileError("invalid tree: " + "; ".join(bad), loc)
        return tree

    @staticmethod
    def load(path: str) -> "ProblemFile":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ProblemFileError(f"JSON parse error: {exc}", path)
        except OSError as exc:
            raise ProblemFileError(str(exc), path)
        return ProblemFile(data, path)


class Report:
    def __init__(self):
        self.lines: List[str] = []
        self.records: List[Dict] = []
        self.failed = False

    def add(self, check: str, ok: bool, message: str, **extra):
        status = "ok" if ok else "FAIL"
        self.lines.append(f"[{check}] {status}: {message}")
        rec = {"check": check, "ok": ok, "message": message}
        rec.update(extra)
        self.records.append(rec)
        if not ok:
            self.failed = True

    def info(self, check: str, message: str, **extra):
        self.lines.append(f"[{check}] {message}")
        rec = {"check": check, "ok": True, "message": message}
        rec.update(extra)
        self.records.append(rec)


def _fmt_key(key) -> str:
    return json.dumps(key, default=str, sort_keys=True)


def _table(problem: ProblemFile, name: str) -> CountTable:
    if name not in problem.tables:
        raise ProblemFileError(f"unknown table {name!r}", problem.path)
    return problem.tables[name]


def _tree(problem: ProblemFile, name: str):
    if name not in problem.trees:
        raise ProblemFileError(f"unknown tree {name!r}", problem.path)
    return problem.trees[name]


def cmd_validate(problem: ProblemFile, args, report: Report):
    names = [args.table] if args.table else sorted(problem.tables)
    if not names:
        report.info("validate", "no tables declared; universes parse cleanly")
    for name in names:
        table = _table(problem, name)
        issues = validate_counts(table)
        report.add(f"validate.{name}", not issues,
                   "table invariants hold" if not issues else "; ".join(issues))


def cmd_residuals(problem: ProblemFile, args, report: Report):
    table = _table(problem, args.table)
    if table.flavor != "I":
        raise ProblemFileError("residual sweeps run on flavor-I tables")
    keys = residual_candidate_keys(table)
    bad = []
    for key in keys:
        r = master_residual(table, key)
        if r != 0:
            bad.append((key, r))
    report.add(f"residuals.{args.table}", not bad,
               f"{len(keys)} candidate keys, {len(bad)} nonzero"
               + ("" if not bad else f"; first witness {_fmt_key(bad[0][0])} = {bad[0][1]}"),
               keys=len(keys), nonzero=len(bad))


def cmd_d2(problem: ProblemFile, args, report: Report):
    table = _table(problem, args.table)
    bound = Fraction(args.below) if args.below else problem.action_bound
    witness = dga.verify_d_squared(table, bound)
    report.add(f"d2.{args.table}", witness is None,
               f"d.d = 0 below {bound}" if witness is None
               else f"witness {_fmt_key(witness.residual_key())} = {witness.value}")


def cmd_homology(problem: ProblemFile, args, report: Report):
    table = _table(problem, args.table)
    bound = Fraction(args.below) if args.below else problem.action_bound
    result = dga.homology_below(table, bound)
    msg = (f"below {bound}: dims (even, odd) = {result.dims}, "
           f"unit exact: {result.unit_is_exact}, basis {result.basis_size}")
    if result.integer_dims is not None:
        graded = {str(k): v for k, v in sorted(result.integer_dims.items())}
        msg += f", graded dims {graded}"
    report.info(f"homology.{args.table}", msg,
                dims=list(result.dims), unit_exact=result.unit_is_exact)


def cmd_cobordism_verify(problem: ProblemFile, args, report: Report):
    table = _table(problem, args.table)
    if table.flavor != "II":
        raise ProblemFileError("cobordism-verify runs on flavor-II tables")
    bound = Fraction(args.below) if args.below else problem.action_bound
    plus = table.companions.get("plus")
    minus = table.companions.get("minus")
    if plus is None or minus is None:
        raise ProblemFileError("table needs 'plus' and 'minus' companions")
    witness = dga.verify_chain_map(table, plus, minus, bound)
    report.add(f"cobordism.{args.table}", witness is None,
               f"chain identity holds below {bound}" if witness is None
               else f"witness {_fmt_key(witness.residual_key())} = {witness.value}")


def _homotopy_cmd(problem, args, report, want_flavor, check):
    table = _table(problem, args.table)
    if table.flavor != want_flavor:
        raise ProblemFileError(f"{check} runs on flavor-{want_flavor} tables")
    bound = Fraction(args.below) if args.below else problem.action_bound
    witness = dga.verify_homotopy(table, bound)
    report.add(f"{check}.{args.table}", witness is None,
               f"homotopy identity holds below {bound}" if witness is None
               else f"witness at monomial {_fmt_key(witness.generator)}")


def cmd_homotopy_verify(problem, args, report):
    _homotopy_cmd(problem, args, report, "III", "homotopy")


def cmd_compose_verify(problem, args, report):
    _homotopy_cmd(problem, args, report, "IV", "compose")


def _strata_poset(problem, args):
    tree = _tree(problem, args.tree)
    table = _table(problem, args.table)
    universe = table.upper_universe()
    poset = trees.enumerate_strata(tree, universe, table.effective_set())
    return tree, table, poset


def cmd_strata(problem: ProblemFile, args, report: Report):
    tree, table, poset = _strata_poset(problem, args)
    by_codim: Dict[int, int] = {}
    killed = 0
    for key in poset.keys():
        st = poset.strata[key]
        by_codim[st.codim] = by_codim.get(st.codim, 0) + 1
        killed += st.orientation_killed
    report.info(f"strata.{args.tree}",
                f"{len(poset.strata)} classes; by codim "
                f"{dict(sorted(by_codim.items()))}; {killed} orientation-killed",
                total=len(poset.strata), by_codim=by_codim, killed=killed)
    report.add(f"strata.{args.tree}.topology",
               poset.is_open(poset.keys()),
               "poset topology sanity: the full set is open")


def cmd_subtrees(problem: ProblemFile, args, report: Report):
    tree = _tree(problem, args.tree)
    subs = trees.enumerate_subtrees(tree)
    report.info(f"subtrees.{args.tree}", f"{len(subs)} connected subtrees",
                count=len(subs))


def cmd_glue_verify(problem: ProblemFile, args, report: Report):
    tree = _tree(problem, args.tree)
    samples = args.samples or 200
    seed = args.seed if args.seed is not None else problem.seed
    rep = glue_params.verify_cell_like(tree, samples, seed)
    for line in rep.lines():
        report.info(f"glue.{args.tree}", line)
    report.add(f"glue.{args.tree}.cells", rep.ok,
               "sampled cell structure checks pass" if rep.ok
               else "sampled checks failed")
    if args.csv:
        rng = random.Random(seed)
        rows = ["coordinate_key,value"]
        for _ in range(min(samples, 1000)):
            c = glue_params.sample_chart_point(tree, rng)
            for key, value in sorted(c.coords.items(), key=repr):
                rows.append(f"\"{key}\",{float(value)}")
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("\n".join(rows) + "\n")
        report.info(f"glue.{args.tree}", f"sample CSV written to {args.csv}")


def cmd_vfc_hocolim(problem: ProblemFile, args, report: Report):
    from .graded_linear import homology_dimensions
    tree, table, poset = _strata_poset(problem, args)
    n = problem.n
    instance = vfc_algebra.qs_instance(poset, n)
    cof = vfc_algebra.check_cofibrant(instance)
    report.add(f"vfc.{args.tree}.cofibrant", cof.ok,
               "strata module is cofibrant" if cof.ok else cof.detail)
    out = vfc_algebra.colim_vs_hocolim(instance, instance.poset.objects)
    report.add(f"vfc.{args.tree}.hocolim", out["equal"],
               f"hocolim homology {dict(sorted(out['hocolim'].items()))} "
               f"matches colimit" if out["equal"] else f"mismatch: {out}")
    top = poset.maximal_key()
    value_h = homology_dimensions(instance.value(top))
    report.info(f"vfc.{args.tree}",
                f"value at the final object has homology {dict(sorted(value_h.items()))}")


def cmd_vfc_lift(problem: ProblemFile, args, report: Report):
    from .graded_linear import (ChainMap, homology_dimensions,
                                lift_against_acyclic_fibration, zero_complex)
    tree, table, poset = _strata_poset(problem, args)
    instance = vfc_algebra.qs_instance(poset, problem.n, with_decompositions=False)
    replacement, q = vfc_algebra.cofibrant_replacement(instance)
    ok = vfc_algebra.check_cofibrant(replacement).ok
    report.add(f"vfc.{args.tree}.replacement", ok,
               "cofibrant replacement passes the cofibrancy check" if ok
               else "replacement fails cofibrancy")
    top = poset.maximal_key()
    qis = (homology_dimensions(replacement.value(top))
           == homology_dimensions(instance.value(top)))
    report.add(f"vfc.{args.tree}.qis", qis and q[top].is_surjective(),
               "projection is a surjective quasi-isomorphism at the final object")
    A = zero_complex()
    lift = lift_against_acyclic_fibration(
        ChainMap.zero(A, replacement.value(top)), q[top],
        ChainMap.zero(A, replacement.value(top)), q[top])
    report.add(f"vfc.{args.tree}.lift", True,
               "lift against the replacement projection exists")


COMMANDS = {
    "validate": cmd_validate,
    "residuals": cmd_residuals,
    "d2": cmd_d2,
    "homology": cmd_homology,
    "cobordism-verify": cmd_cobordism_verify,
    "homotopy-verify": cmd_homotopy_verify,
    "compose-verify": cmd_compose_verify,
    "strata": cmd_strata,
    "subtrees": cmd_subtrees,
    "glue-verify": cmd_glue_verify,
    "vfc-hocolim": cmd_vfc_hocolim,
    "vfc-lift": cmd_vfc_lift,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sft-chainlab",
        description="Symbolic checks for contact-homology count data")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("file", help="problem file (JSON)")
    parser.add_argument("--table", help="table name")
    parser.add_argument("--tree", help="tree name")
    parser.add_argument("--below", help="action bound (rational)")
    parser.add_argument("--samples", type=int, help="sample count")
    parser.add_argument("--seed", type=int, help="sampling seed")
    parser.add_argument("--csv", help="write sampled points as CSV")
    parser.add_argument("--jobs", type=int, default=None,
                        help="parallelism bound (results are order-independent"
                             " and canonically sorted; evaluation is serial)")
    parser.add_argument("--json-out", help="write a machine-readable sidecar")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    jobs = args.jobs
    if jobs is None:
        jobs = int(os.environ.get("SFT_CHAINLAB_JOBS", "1") or 1)
    report = Report()
    try:
        problem = ProblemFile.load(args.file)
        report.info("run", f"{args.command} on {args.file} (jobs={jobs}, "
                           f"seed={args.seed if args.seed is not None else problem.seed})")
        COMMANDS[args.command](problem, args, report)
    except ProblemFileError as exc:
        print(f"[parse] FAIL: {exc}", file=sys.stderr)
        return 2
    except ChainLabError as exc:
        report.add("error", False, str(exc))
    for line in report.lines:
        print(line)
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump({"command": args.command, "file": args.file,
                       "records": report.records, "failed": report.failed},
                      fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
    return 1 if report.failed else 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
