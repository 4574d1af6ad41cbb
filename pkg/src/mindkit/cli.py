"""Operator command line: simulate study days, learn priors, decode recordings.

    mindkit simulate-session --day 3 --seed 7 --out run/
    mindkit gen-lab-corpus --subjects 11 --trials 40 --seed 1 --out corpus.csv
    mindkit learn-prior --corpus corpus.csv --out prior.mynp
    mindkit decode --recordings run/uploads/recordings --private-key run/keys/private.pem \
        --prior prior.mynp --out results/

Every command is deterministic for a fixed configuration and seed and
writes a manifest recording library versions, seeds, and input digests.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import datastore, decoder, features, session, simkit, streamkit

logger = logging.getLogger(__name__)

SIM_EPOCH = 1767603600.0  # fixed simulated wall clock origin (2026-01-05 09:00 UTC)
CHECKUP_SECONDS = 4.0
NOISE_CHECK_WINDOWS = 3
FITTING_CAP_S = 3600.0  # simulation guard; the protocol itself has no cap
DEFAULT_BATTERY = 0.9

EXIT_OK = 0
EXIT_ERROR = 1


class CliError(Exception):
    pass


def _iso(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).isoformat()


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, config: dict,
                   inputs: dict[str, Path], outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "mindkit_version": __version__,
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "python_version": sys.version.split()[0],
        "config": config,
        "input_digests": {name: _sha256_file(p) for name, p in inputs.items()
                          if p.exists()},
        "outputs": sorted(outputs),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _resolve_profile(name_or_path: str, seed: int) -> tuple[simkit.SyntheticSubjectProfile, Path | None]:
    if name_or_path in simkit.STOCK_PROFILES:
        return simkit.STOCK_PROFILES[name_or_path](seed=seed), None
    path = Path(name_or_path)
    if not path.exists():
        raise CliError(f"profile {name_or_path!r} is neither a stock profile "
                       f"({', '.join(sorted(simkit.STOCK_PROFILES))}) nor a file")
    return simkit.load_profile(path), path


def _parse_lambda_grid(text: str) -> tuple[float, ...]:
    try:
        grid = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise CliError(f"bad --lambda-grid {text!r}: {exc}") from exc
    if not grid or any(g < 0 for g in grid):
        raise CliError("--lambda-grid needs non-negative comma-separated values")
    return grid


# --- simulate-session --------------------------------------------------------

@dataclass
class DaySummary:
    day: int
    subject: str
    scenarios_run: int = 0
    blocks_recorded: int = 0
    trials_recorded: int = 0
    uploads_sent: int = 0
    fitting_times_s: list[float] = field(default_factory=list)
    block_lines: list[str] = field(default_factory=list)
    locked_out: bool = False


class StudySimulator:
    """Runs one study day against the session engine with synthetic EEG."""

    def __init__(self, study: session.StudyDefinition, day: int, seed: int,
                 subject: str, profile: simkit.SyntheticSubjectProfile,
                 public_key, queue: datastore.UploadQueue,
                 transport: datastore.Transport, line_freq: float,
                 battery: float, locale: str) -> None:
        self.study = study
        self.engine = session.SessionEngine(study, day=day, seed=seed)
        self.seed = seed
        self.subject = subject
        self.profile = profile
        self.public_key = public_key
        self.queue = queue
        self.transport = transport
        self.line_freq = line_freq
        self.battery = battery
        self.locale = locale
        self.clock = SIM_EPOCH + (day - 1) * 86400.0
        self.summary = DaySummary(day=day, subject=subject)
        self._noise_rng = np.random.default_rng([seed, day, 11])
        self._answer_rng = np.random.default_rng([seed, day, 13])

    def run_day(self) -> DaySummary:
        engine = self.engine
        while not engine.day_complete():
            scenario = engine.next_pending_scenario()
            assert scenario is not None
            engine.handle(session.Event(session.EventKind.START_SESSION), self.clock)
            if scenario.kind == session.SCENARIO_QUESTIONNAIRE:
                self._run_questionnaire(scenario)
            else:
                self._run_recording(scenario)
            self.summary.scenarios_run += 1
        self.summary.locked_out = engine.phase == session.SessionPhase.LOCKED_OUT
        return self.summary

    # -- scenario runners

    def _run_questionnaire(self, scenario: session.Scenario) -> None:
        def answer(item: session.QuestionnaireItem) -> object:
            if item.kind == "rating":
                return int(self._answer_rng.integers(max(item.scale - 2, 1),
                                                     item.scale + 1))
            if item.kind == "multiple_choice":
                return item.options[0]
            return "n/a"

        responses = session.run_questionnaire(scenario.items, answer,
                                              locale=self.locale,
                                              clock=lambda: self.clock)
        self.clock += len(scenario.items) * session.SECONDS_PER_QUESTIONNAIRE_ITEM
        doc = session.questionnaire_result_doc(
            scenario.questionnaire_id, self.subject, self.engine.day,
            self.locale, responses)
        datastore.store_questionnaire(doc, self.subject, self.public_key, self.queue)
        self.engine.handle(session.Event(session.EventKind.STEP_DONE), self.clock)
        results = datastore.flush_uploads(self.queue, self.transport)
        self.summary.uploads_sent += sum(r.ok for r in results)

    def _run_recording(self, scenario: session.Scenario) -> None:
        engine = self.engine
        spec = self.study.strategy(scenario.strategy)
        engine.handle(session.Event(session.EventKind.STEP_DONE), self.clock)
        engine.handle(session.Event(session.EventKind.DEVICE_FOUND), self.clock)
        engine.handle(session.Event(session.EventKind.BATTERY_READ, level=self.battery),
                      self.clock)
        engine.handle(session.Event(session.EventKind.STEP_DONE), self.clock)

        noise_env = self._run_noise_check()
        engine.handle(session.Event(session.EventKind.NOISE_CHECK_DONE), self.clock)

        estimator = streamkit.QualityEstimator()
        fitting_time = self._run_fitting(estimator)
        self.summary.fitting_times_s.append(fitting_time)
        engine.handle(session.Event(session.EventKind.QUALITY_MET), self.clock)

        started_at = self.clock
        scenario_index = engine.schedule.index(scenario)
        sample_chunks: list[np.ndarray] = []
        markers: list[datastore.Marker] = []
        quality_trace: list[list[float]] = []
        cursor = 0

        while True:
            block = engine.current_block()
            assert block is not None
            block_index = scenario.completed_blocks
            block_chunks: list[np.ndarray] = []
            block_markers = [datastore.Marker(cursor, datastore.MARKER_BLOCK_START,
                                              block.block_id)]
            block_trace: list[list[float]] = []
            block_qualities: list[float] = []
            for trial_idx, trial in enumerate(block.trials):
                start = cursor
                trial_seed = [self.seed, self.engine.day, scenario_index,
                              block_index, trial_idx]
                window = simkit.gen_trial(self.profile, trial.task, trial.duration_s,
                                          seed=trial_seed)
                samples = window.samples.T  # (n, channels)
                reports = estimator.ingest_array(samples, start_index=start)
                for rep in reports:
                    block_trace.append([rep.timestamp, *rep.per_channel])
                trial_quality = float(np.mean([np.mean(r.per_channel) for r in reports])) \
                    if reports else float("nan")
                block_qualities.append(trial_quality)
                block_markers.append(datastore.Marker(start, datastore.MARKER_TRIAL_START,
                                                      trial.task))
                cursor += samples.shape[0]
                block_markers.append(datastore.Marker(cursor, datastore.MARKER_TRIAL_END,
                                                      trial.task))
                block_chunks.append(samples)
                self.clock += trial.duration_s
                engine.handle(session.Event(session.EventKind.TRIAL_ELAPSED), self.clock)
            # Engine reached BlockReview, so the block is persisted: keep its data.
            block_markers.append(datastore.Marker(cursor, datastore.MARKER_BLOCK_END,
                                                  block.block_id))
            sample_chunks.extend(block_chunks)
            markers.extend(block_markers)
            quality_trace.extend(block_trace)
            self.summary.blocks_recorded += 1
            self.summary.trials_recorded += len(block.trials)
            self.summary.block_lines.append(
                f"day {self.engine.day} {block.block_id}: {len(block.trials)} trials, "
                f"mean quality {np.nanmean(block_qualities):.2f}, "
                f"{block.duration_s() / 60:.1f} min")
            if engine.current_block() is None:
                break
            engine.handle(session.Event(session.EventKind.CONTINUE_BLOCK), self.clock)
            self._run_checkup(estimator)
            engine.handle(session.Event(session.EventKind.QUALITY_MET), self.clock)

        engine.handle(session.Event(session.EventKind.END_SESSION), self.clock)
        dataset = datastore.RecordingDataset(
            subject_id=self.subject,
            scenario_id=scenario.scenario_id,
            day=self.engine.day,
            sample_rate=streamkit.SAMPLE_RATE,
            channel_labels=streamkit.CHANNEL_LABELS,
            samples=np.vstack(sample_chunks) if sample_chunks else
            np.zeros((0, streamkit.N_CHANNELS), dtype=np.float32),
            markers=markers,
            metadata={
                "strategy": scenario.strategy,
                "task_labels": {spec.tasks[0]: 1, spec.tasks[1]: -1},
                "locale": self.locale,
                "line_freq": self.line_freq,
                "started_at": _iso(started_at),
                "fitting_time_s": round(fitting_time, 3),
                "noise_check_env": [round(v, 6) for v in noise_env],
                "quality_trace": [[int(row[0])] + [round(v, 6) for v in row[1:]]
                                  for row in quality_trace],
                "sensor_locations": list(streamkit.CHANNEL_LABELS),
                "seed": self.seed,
            })
        datastore.store_recording(dataset, self.public_key, self.queue)
        results = datastore.flush_uploads(self.queue, self.transport)
        self.summary.uploads_sent += sum(r.ok for r in results)
        engine.handle(session.Event(session.EventKind.UPLOAD_DONE), self.clock)

    # -- hardware simulations

    def _run_noise_check(self) -> list[float]:
        envs = []
        for _ in range(NOISE_CHECK_WINDOWS):
            block = simkit.gen_noise_block(self.profile, 1.0,
                                           self.profile.baseline_sigma, self._noise_rng)
            report = streamkit.em_noise_quality(block, line_freq=self.line_freq)
            envs.append(float(np.mean(report.per_channel)))
            self.clock += 1.0
        return envs

    def _run_fitting(self, estimator: streamkit.QualityEstimator) -> float:
        cfg = streamkit.FittingGateConfig()
        elapsed = 0.0
        step = streamkit.WINDOW_SAMPLES / streamkit.SAMPLE_RATE
        while elapsed < FITTING_CAP_S:
            sigma = self.profile.fitting.sigma_at(elapsed)
            block = simkit.gen_noise_block(self.profile, step, sigma, self._noise_rng)
            reports = estimator.ingest_array(block.T)
            elapsed += step
            if reports and streamkit.fitting_gate(elapsed, reports[-1], cfg).met:
                self.clock += elapsed
                return elapsed
        raise CliError("fitting simulation failed to converge inside an hour")

    def _run_checkup(self, estimator: streamkit.QualityEstimator) -> None:
        sigma = self.profile.fitting.sigma_final
        block = simkit.gen_noise_block(self.profile, CHECKUP_SECONDS, sigma,
                                       self._noise_rng)
        estimator.ingest_array(block.T)
        self.clock += CHECKUP_SECONDS


def cmd_simulate_session(args: argparse.Namespace) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    study = session.load_study(args.study) if args.study else session.default_study()
    profile, profile_path = _resolve_profile(args.profile, args.seed)
    if profile.line_freq != args.line_freq:
        profile = dataclasses.replace(profile, line_freq=float(args.line_freq))
    subject = args.subject or f"sim{args.seed:08d}"

    keys_dir = out_dir / "keys"
    if args.public_key:
        public_key = datastore.load_public_key(args.public_key)
    else:
        keys_dir.mkdir(exist_ok=True)
        pub_path = keys_dir / "public.pem"
        priv_path = keys_dir / "private.pem"
        if pub_path.exists():
            public_key = datastore.load_public_key(pub_path)
        else:
            private_key, public_key = datastore.generate_keypair()
            datastore.save_private_key(private_key, priv_path)
            datastore.save_public_key(public_key, pub_path)

    if args.transport == "http":
        if not args.server:
            raise CliError("--transport http needs --server URL")
        transport: datastore.Transport = datastore.HttpTransport(args.server)
    else:
        transport = datastore.DirectoryTransport(out_dir / "uploads")

    queue = datastore.UploadQueue(out_dir / "queue")
    sim = StudySimulator(study, args.day, args.seed, subject, profile, public_key,
                         queue, transport, float(args.line_freq), args.battery,
                         args.locale)
    try:
        summary = sim.run_day()
    except session.BlockedError as exc:
        print(f"session blocked: {exc}", file=sys.stderr)
        return EXIT_ERROR

    for line in summary.block_lines:
        print(line)
    fit = ", ".join(f"{t:.1f}s" for t in summary.fitting_times_s)
    print(f"day {summary.day} done: {summary.scenarios_run} scenarios, "
          f"{summary.blocks_recorded} blocks, {summary.trials_recorded} trials, "
          f"{summary.uploads_sent} uploads, fitting [{fit}]")
    if summary.locked_out:
        print("day complete; locked out until the twelve-hour timer expires")

    inputs = {}
    if args.study:
        inputs["study"] = Path(args.study)
    if profile_path:
        inputs["profile"] = profile_path
    config = {k: getattr(args, k) for k in
              ("day", "seed", "subject", "study", "profile", "transport",
               "line_freq", "battery", "locale")}
    config["subject"] = subject
    write_manifest(out_dir, "simulate-session", config, inputs,
                   outputs=sorted(p.name for p in out_dir.iterdir()
                                  if p.name != "manifest.json"))
    return EXIT_OK


# --- gen-lab-corpus -----------------------------------------------------------

STRATEGY_TASKS = {
    session.STRATEGY_MEMORIES: ("memory", "subtraction"),
    session.STRATEGY_IMAGERY: ("song", "subtraction"),
    session.STRATEGY_RESTING: ("eyes_open", "eyes_closed"),
}


def cmd_gen_lab_corpus(args: argparse.Namespace) -> int:
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    dist = simkit.ProfileDistribution(tasks=STRATEGY_TASKS[args.strategy])
    vectors = simkit.gen_lab_feature_vectors(args.subjects, args.trials, args.seed,
                                             distribution=dist, strategy=args.strategy)
    features.write_feature_table(vectors, out_path)
    print(f"wrote {len(vectors)} trials ({args.subjects} subjects x {args.trials}) "
          f"to {out_path}")
    if out_path.parent.is_dir():
        config = {k: getattr(args, k) for k in ("subjects", "trials", "seed", "strategy")}
        write_manifest(out_path.parent, "gen-lab-corpus", config, {},
                       outputs=[out_path.name])
    return EXIT_OK


# --- learn-prior ----------------------------------------------------------------

def cmd_learn_prior(args: argparse.Namespace) -> int:
    corpus_path = Path(args.corpus)
    if not corpus_path.exists():
        raise CliError(f"corpus file {corpus_path} not found")
    vectors = features.read_feature_table(corpus_path)
    if not vectors:
        raise CliError("corpus is empty")
    tasks = simkit.tasks_from_feature_vectors(vectors, features.GROUPING_LAB_SESSION)
    prior, info = decoder.learn_prior(tasks, iterations=args.iterations,
                                      lam=args.prior_lambda, zero_mean=args.zero_mean)
    blob = decoder.write_prior(prior, info)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(blob)
    state = "converged" if info.converged else "hit the iteration cap"
    print(f"prior learned from {len(tasks)} tasks: {state} after "
          f"{info.iterations_run} iterations (residual {info.residual:.3e})")
    print(f"wrote {out_path} ({len(blob)} bytes)")
    write_manifest(out_path.parent, "learn-prior",
                   {"corpus": str(corpus_path), "iterations": args.iterations,
                    "prior_lambda": args.prior_lambda, "zero_mean": args.zero_mean},
                   {"corpus": corpus_path}, outputs=[out_path.name])
    return EXIT_OK


# --- decode ---------------------------------------------------------------------

def _load_recordings(recordings_dir: Path, private_key) -> tuple[list, list[dict]]:
    """Decrypt and parse everything decodable under the recordings directory."""
    datasets = []
    questionnaires = []
    files = sorted(p for p in recordings_dir.rglob("*") if p.is_file())
    for path in files:
        blob = path.read_bytes()
        if blob[:4] == datastore.ENVELOPE_MAGIC:
            if private_key is None:
                raise CliError(f"{path.name} is encrypted; pass --private-key")
            blob = datastore.decrypt_envelope(blob, private_key)
        if blob[:4] == datastore.CONTAINER_MAGIC:
            datasets.append(datastore.read_dataset(blob))
            continue
        try:
            doc = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            logger.warning("skipping undecodable file %s", path)
            continue
        if isinstance(doc, dict) and doc.get("kind") == "questionnaire_result":
            questionnaires.append(doc)
        else:
            logger.warning("skipping unrecognized document %s", path)
    return datasets, questionnaires


def _trials_from_dataset(dataset: datastore.RecordingDataset) -> list[features.TrialWindow]:
    meta = dataset.metadata
    task_labels = {str(k): int(v) for k, v in meta.get("task_labels", {}).items()}
    trace = meta.get("quality_trace", [])
    out = []
    open_marker: datastore.Marker | None = None
    trial_index = 0
    for marker in dataset.markers:
        if marker.code == datastore.MARKER_TRIAL_START:
            open_marker = marker
        elif marker.code == datastore.MARKER_TRIAL_END and open_marker is not None:
            span = dataset.samples[open_marker.sample_index:marker.sample_index]
            window = features.TrialWindow(
                samples=span.T.astype(np.float64),
                sample_rate=dataset.sample_rate,
                task=marker.label,
                label=task_labels.get(marker.label, 0),
                subject=dataset.subject_id,
                day=dataset.day,
                strategy=str(meta.get("strategy", "")),
                trial_index=trial_index)
            qs = [float(np.mean(row[1:])) for row in trace
                  if open_marker.sample_index < row[0] <= marker.sample_index]
            out.append((window, float(np.mean(qs)) if qs else float("nan")))
            trial_index += 1
            open_marker = None
    return out


def cmd_decode(args: argparse.Namespace) -> int:
    recordings_dir = Path(args.recordings)
    if not recordings_dir.is_dir():
        raise CliError(f"recordings directory {recordings_dir} not found")
    private_key = datastore.load_private_key(args.private_key) if args.private_key else None
    datasets, questionnaires = _load_recordings(recordings_dir, private_key)
    if not datasets:
        raise CliError(f"no decodable recordings under {recordings_dir}")

    if args.prior:
        prior, prior_header = decoder.read_prior(Path(args.prior).read_bytes())
    else:
        prior, prior_header = decoder.GaussianPrior.uninformative(), {}
    grid = _parse_lambda_grid(args.lambda_grid) if args.lambda_grid else decoder.LAMBDA_GRID

    motivation: dict[tuple[str, int], float] = {}
    meditation: dict[str, float] = {}
    for doc in questionnaires:
        subject = str(doc.get("subject_id"))
        day = int(doc.get("day", 0))
        for resp in doc.get("responses", []):
            if resp.get("item") == "motivation":
                motivation[(subject, day)] = float(resp["value"])
            if resp.get("item") == "meditation_experience":
                meditation[subject] = float(resp["value"])

    trial_quality: dict[tuple[str, int, str, int], float] = {}
    vectors = []
    for dataset in datasets:
        for window, quality in _trials_from_dataset(dataset):
            vec = features.extract_trial_features(window)
            vectors.append(vec)
            trial_quality[(vec.subject, vec.day, vec.strategy, vec.trial_index)] = quality
    if not vectors:
        raise CliError("recordings contain no trial markers")

    tasks = simkit.tasks_from_feature_vectors(vectors, features.GROUPING_HOME_DAY)
    results = []
    for task in tasks:
        accuracy = decoder.loo_accuracy(task, prior, lam=None, lambda_grid=grid)
        qs = [q for (s, d, strat, _), q in trial_quality.items()
              if (s, d, strat) == (task.subject, task.day, task.strategy)
              and np.isfinite(q)]
        results.append(decoder.DecodingResult(
            subject=task.subject, day=task.day, strategy=task.strategy,
            accuracy=accuracy, n_trials=task.n_trials,
            mean_quality=float(np.mean(qs)) if qs else float("nan"),
            motivation=motivation.get((task.subject, task.day), float("nan")),
            meditation=meditation.get(task.subject, float("nan"))))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    decoder.write_results_table(results, out_dir / "results.csv")
    report = decoder.mediator_report(results)
    _write_mediators(report, out_dir / "mediators.csv")
    _write_series(results, report, out_dir)
    _write_r2_maps(vectors, out_dir / "r2_map.csv")
    features.write_feature_table(vectors, out_dir / "features.csv")

    for r in sorted(results, key=lambda r: (r.subject, r.day, r.strategy)):
        print(f"{r.subject} day {r.day} {r.strategy}: accuracy {r.accuracy:.3f} "
              f"({r.n_trials} trials)")
    for name, rp in report.correlations.items():
        note = report.notes.get(name, "")
        line = f"mediator {name}: " + (f"r={rp[0]:+.3f} p={rp[1]:.4f}" if rp else
                                       f"skipped ({note})")
        print(line)

    config = {"recordings": str(recordings_dir), "prior": args.prior,
              "lambda_grid": list(grid), "prior_header": prior_header}
    inputs = {"prior": Path(args.prior)} if args.prior else {}
    write_manifest(out_dir, "decode", config, inputs,
                   outputs=[p.name for p in sorted(out_dir.iterdir())
                            if p.is_file() and p.name != "manifest.json"])
    return EXIT_OK


def _write_mediators(report: decoder.MediatorReport, path: Path) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("mediator", "r", "p", "note"))
        for name in decoder.MEDIATOR_COLUMNS:
            rp = report.correlations.get(name)
            if rp is None:
                writer.writerow((name, "", "", report.notes.get(name, "")))
            else:
                writer.writerow((name, repr(rp[0]), repr(rp[1]), ""))


def _write_series(results, report: decoder.MediatorReport, out_dir: Path) -> None:
    with (out_dir / "series_accuracy_by_day.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("day", "median_accuracy", "mean_accuracy", "n_tasks"))
        for day in sorted(report.per_day_median):
            accs = [r.accuracy for r in results if r.day == day]
            writer.writerow((day, repr(report.per_day_median[day]),
                             repr(float(np.mean(accs))), len(accs)))
    with (out_dir / "series_accuracy_vs_quality.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("mean_quality", "accuracy", "subject", "day", "strategy"))
        for r in sorted(results, key=lambda r: (np.isnan(r.mean_quality), r.mean_quality)):
            writer.writerow((repr(r.mean_quality), repr(r.accuracy),
                             r.subject, r.day, r.strategy))


def _write_r2_maps(vectors, path: Path) -> None:
    by_group: dict[tuple[str, str], list] = {}
    for v in vectors:
        by_group.setdefault((v.strategy, v.subject), []).append(v)
    rows = []
    for (strategy, subject), vs in sorted(by_group.items()):
        labels = np.array([v.label for v in vs], dtype=float)
        if np.unique(labels).size < 2:
            continue
        matrix = np.stack([v.values for v in vs])
        rows.append((strategy, subject, features.r2_map(matrix, labels)))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("strategy", "subject") + features.FEATURE_NAMES)
        for strategy, subject, r2 in rows:
            writer.writerow((strategy, subject) + tuple(repr(v) for v in r2))


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mindkit", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate-session", help="run one synthetic study day")
    sim.add_argument("--study", help="study definition JSON (default: built-in 7-day)")
    sim.add_argument("--day", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--subject", help="subject token (default derived from seed)")
    sim.add_argument("--profile", default="strong",
                     help="stock profile name (strong|weak|zero) or a profile JSON path")
    sim.add_argument("--transport", choices=("dir", "http"), default="dir")
    sim.add_argument("--server", help="base URL for --transport http")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--line-freq", type=float, choices=(50.0, 60.0), default=50.0)
    sim.add_argument("--battery", type=float, default=DEFAULT_BATTERY)
    sim.add_argument("--locale", choices=session.SUPPORTED_LOCALES, default="en")
    sim.add_argument("--public-key", help="recipient public key PEM "
                                          "(default: keypair generated under out/keys)")
    sim.set_defaults(func=cmd_simulate_session)

    corpus = sub.add_parser("gen-lab-corpus", help="write a synthetic lab feature table")
    corpus.add_argument("--subjects", type=int, default=simkit.LAB_SUBJECTS_MEMORIES)
    corpus.add_argument("--trials", type=int, default=simkit.LAB_TRIALS_MEMORIES)
    corpus.add_argument("--seed", type=int, default=0)
    corpus.add_argument("--strategy", choices=tuple(STRATEGY_TASKS),
                        default=session.STRATEGY_MEMORIES)
    corpus.add_argument("--out", required=True, help="feature table CSV path")
    corpus.set_defaults(func=cmd_gen_lab_corpus)

    prior = sub.add_parser("learn-prior", help="learn a decoding prior from a corpus")
    prior.add_argument("--corpus", required=True, help="feature table CSV")
    prior.add_argument("--out", required=True, help="prior file path")
    prior.add_argument("--iterations", type=int, default=decoder.MAX_PRIOR_ITERATIONS)
    prior.add_argument("--prior-lambda", type=float, default=decoder.DEFAULT_PRIOR_LAMBDA,
                       help="lambda used for the per-task fits while learning")
    prior.add_argument("--zero-mean", action="store_true",
                       help="pin the prior mean at zero (sensitivity check)")
    prior.set_defaults(func=cmd_learn_prior)

    dec = sub.add_parser("decode", help="decode recordings and report accuracies")
    dec.add_argument("--recordings", required=True,
                     help="directory of envelopes or plain containers")
    dec.add_argument("--private-key", help="PEM key for encrypted recordings")
    dec.add_argument("--prior", help="prior file (default: uninformative)")
    dec.add_argument("--lambda-grid", help="comma-separated lambda values")
    dec.add_argument("--out", required=True, help="output directory")
    dec.set_defaults(func=cmd_decode)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, session.SessionError, datastore.DatastoreError,
            decoder.DecoderError, features.FeatureError,
            simkit.SimulatorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
