"""Command-line entry point: simulate, closure-label, judge, report, summary."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .backends import ChatCompletionsBackend, load_doctor_backends
from .judge import ingest_human_scores, judge_transcripts, read_scores, write_judgements
from .memory import HashEmbedder, RetrievalWeights
from .orchestrator import ConversationConfig, Runtime, classify_closure, format_manifest, parse_manifest, run_campaign, write_campaign
from .packet import bundled_cohort_path, load_cohort
from .patient import PatientBackends, PatientConfig
from .report import export_artifacts, summarize_campaign
from .rubric import bundled_catalog_path, load_catalog
from .scripted import ScriptedSuite, scripted_suite
from .transcript import read_transcripts, write_transcript

log = logging.getLogger("clinbench")

ROLES = ("effort", "emotion", "responder", "classifier", "judge")


def load_suite(spec: str, seed: int, close_after: int | None = None) -> ScriptedSuite:
    """``scripted`` or a JSON file mapping each role to a chat-completions spec.

    The file form: ``{"effort": {...}, "emotion": {...}, "responder": {...},
    "classifier": {...}, "judge": {...}, "embed_dim": 64}``; every role spec
    takes the same keys as a ``chat`` doctor entry.
    """
    if spec == "scripted":
        return scripted_suite(seed, close_after=close_after)
    doc = json.loads(Path(spec).read_text(encoding="utf-8"))
    missing = [r for r in ROLES if r not in doc]
    if missing:
        raise SystemExit(f"{spec}: missing backend roles {missing}")
    lm = {}
    for role in ROLES:
        s = doc[role]
        lm[role] = ChatCompletionsBackend(
            f"{role}:{s.get('model', s.get('model_id', role))}",
            s["base_url"],
            model=s.get("model"),
            api_key_env=s.get("api_key_env"),
            params=s.get("params"),
            provider=s.get("provider"),
            calls_per_second=s.get("calls_per_second"),
        ).as_language_model()
    return ScriptedSuite(
        patient=PatientBackends(lm["effort"], lm["emotion"], lm["responder"]),
        classifier=lm["classifier"],
        judge=lm["judge"],
        embedder=HashEmbedder(dim=doc.get("embed_dim", 64), seed=seed),
    )


def resolve_catalog(value: str) -> Path:
    path = Path(value)
    if path.exists():
        return path
    if value in ("catalog", "toy_catalog"):
        return bundled_catalog_path(value)
    raise SystemExit(f"catalog not found: {value}")


def transcript_dir(path: Path) -> Path:
    return path / "transcripts" if (path / "transcripts").is_dir() else path


def cmd_simulate(args) -> int:
    cohort = load_cohort(args.cohort or bundled_cohort_path())
    if args.patients:
        keep = cohort.patient_ids()[: args.patients]
        cohort.packets = {pid: cohort.packets[pid] for pid in keep}
    models = load_doctor_backends(args.models)
    suite = load_suite(args.backends, args.seed, args.close_after)
    weights = RetrievalWeights(decay_rate=args.decay)
    config = ConversationConfig(cap=args.cap, doctor_closure_marker=args.doctor_marker, patient=PatientConfig(k=args.k, weights=weights))
    runtime = Runtime(suite.patient, suite.classifier, suite.embedder, config)
    result = run_campaign(cohort, models, runtime, repeats=args.repeats, parallelism=args.parallelism, seed=args.seed)
    write_campaign(result, args.out)
    print(f"{len(result.transcripts)} transcripts, {len(result.failures)} failures -> {args.out}")
    return 0


def cmd_closure_label(args) -> int:
    suite = load_suite(args.backends, args.seed)
    tdir = transcript_dir(args.in_dir)
    transcripts = read_transcripts(tdir)
    labelled = 0
    for t in transcripts:
        if classify_closure(t, suite.classifier) is not None:
            labelled += 1
        write_transcript(t, tdir)
    print(f"labelled {labelled}/{len(transcripts)} transcripts in {tdir}")
    return 0


def cmd_judge(args) -> int:
    catalog = load_catalog(resolve_catalog(args.catalog))
    tdir = transcript_dir(args.transcripts)
    transcripts = read_transcripts(tdir)
    suite = load_suite(args.backends, args.seed)
    results = judge_transcripts(transcripts, catalog, suite.judge, parallelism=args.parallelism, committee_size=args.committee_size)
    write_judgements(results, args.out)
    manifest = {
        "transcripts": str(tdir.resolve()),
        "catalog": str(resolve_catalog(args.catalog).resolve()),
        "conversations": str(len(results)),
        "scores": str(sum(len(r.scores) for r in results)),
        "failures": str(sum(len(r.failures) for r in results)),
        "undiscussed": str(sum(len(r.undiscussed) for r in results)),
        "skipped": str(sum(1 for r in results if r.warnings)),
    }
    (args.out / "judge.txt").write_text(format_manifest(manifest), encoding="utf-8")
    print(f"{manifest['scores']} scores, {manifest['failures']} unscored -> {args.out}")
    return 0


def cmd_report(args) -> int:
    catalog = load_catalog(resolve_catalog(args.catalog))
    scores = read_scores(args.scores)
    tdir = args.transcripts
    if tdir is None:
        meta = args.scores / "judge.txt"
        if not meta.exists():
            raise SystemExit("--transcripts is required when the scores directory has no judge.txt")
        tdir = Path(parse_manifest(meta.read_text(encoding="utf-8"))["transcripts"])
    tdir = transcript_dir(tdir)
    transcripts = read_transcripts(tdir)
    if args.human:
        merged = ingest_human_scores(read_scores(args.human), scores)
        scores = list(merged.merged)
        if merged.agreement:
            a = merged.agreement
            print(f"human overlap {a.n}: exact match {a.exact_match_rate:.3f}, mean |diff| {a.mean_abs_diff:.3f}")
    params = {}
    campaign = tdir.parent / "campaign.txt"
    if campaign.exists():
        for key, value in parse_manifest(campaign.read_text(encoding="utf-8")).items():
            if key.startswith("model.") and key.endswith(".params"):
                params[key[len("model.") : -len(".params")]] = value
    written = export_artifacts(transcripts, scores, catalog, args.out, model_params=params)
    print(f"wrote {len(written)} files -> {args.out}")
    return 0


def cmd_summary(args) -> int:
    transcripts = read_transcripts(transcript_dir(args.transcripts))
    if not transcripts:
        raise SystemExit(f"no transcripts in {args.transcripts}")
    sys.stdout.write(summarize_campaign(transcripts, cap=args.cap).format())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clinbench", description="Simulated clinical consultations and rubric judging.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def backends(p):
        p.add_argument("--backends", default="scripted", help="'scripted' or a JSON file of role backends")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("simulate", help="run a campaign of conversations")
    p.add_argument("--cohort", type=Path, default=None, help="cohort directory (default: the bundled cohort)")
    p.add_argument("--models", type=Path, required=True)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--cap", type=int, default=50)
    p.add_argument("--k", type=int, default=5, help="memories retrieved per turn")
    p.add_argument("--decay", type=float, default=0.995, help="recency decay per hour")
    p.add_argument("--patients", type=int, default=0, help="only the first N patients (0 = all)")
    p.add_argument("--doctor-marker", default=None, help="literal dismissal marker instead of the classifier")
    p.add_argument("--close-after", type=int, default=None, help="scripted patient closes after N turns")
    backends(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("closure-label", help="(re)label conversation closure")
    p.add_argument("--in", dest="in_dir", type=Path, required=True)
    backends(p)
    p.set_defaults(func=cmd_closure_label)

    p = sub.add_parser("judge", help="score transcripts against a rubric catalog")
    p.add_argument("--transcripts", type=Path, required=True)
    p.add_argument("--catalog", required=True, help="catalog file, or 'catalog' / 'toy_catalog' for the bundled ones")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--committee-size", type=int, default=3)
    backends(p)
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("report", help="aggregate scores and export tables")
    p.add_argument("--scores", type=Path, required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--transcripts", type=Path, default=None)
    p.add_argument("--human", type=Path, default=None, help="JSONL of human scores to overlay")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("summary", help="conversation length statistics")
    p.add_argument("--transcripts", type=Path, required=True)
    p.add_argument("--cap", type=int, default=50)
    p.set_defaults(func=cmd_summary)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
