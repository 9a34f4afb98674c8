"""Command-line entry point tying the pipeline together.

Machine-readable output goes to stdout, diagnostics to stderr. Exit
codes: 0 success, 1 validation failure, 2 I/O or transport failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import codec, constraints, dataset, flowmatch, metrics, planner, render
from .client import ClientConfig, ClientError, TransportError, request_plan
from .geometry import BBox, BoxError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2

_VALIDATION_ERRORS = (
    codec.CodecError,
    planner.PlannerOutputError,
    constraints.ConstraintError,
    dataset.DatasetError,
    metrics.MetricsError,
    BoxError,
    ValueError,
    KeyError,
)


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def _read_json(path: str) -> dict:
    return json.loads(_read_text(path))


def _print_json(doc) -> None:
    print(json.dumps(doc, ensure_ascii=False, indent=2))


def _load_scene(path: str) -> tuple[planner.SceneSpec, dict[str, BBox] | None]:
    doc = _read_json(path)
    spec = planner.spec_from_dict(doc)
    boxes = None
    if "boxes" in doc:
        boxes = {eid: BBox.from_list(b) for eid, b in doc["boxes"].items()}
    return spec, boxes


def cmd_encode(args) -> int:
    records = dataset.load_records(args.input)
    for record in records:
        print(codec.serialize(dataset.record_to_instruction(record)))
    return EXIT_OK


def cmd_decode(args) -> int:
    lines = [ln for ln in _read_text(args.input).splitlines() if ln.strip()]
    for i, line in enumerate(lines, start=1):
        caption, entities = codec.parse(line)
        record = dataset.GroundedRecord(
            id=f"decoded-{i:05d}",
            caption=caption,
            entities=tuple(
                dataset.RecordEntity(e.phrase, dict(e.attributes), e.box)
                for e in entities
            ),
            source="decoded",
        )
        print(json.dumps(dataset.record_to_dict(record), ensure_ascii=False,
                         separators=(",", ":")))
    return EXIT_OK


def cmd_plan(args) -> int:
    spec, _ = _load_scene(args.spec)
    if args.mllm:
        config = _client_config(args)
        prompt = args.prompt or _spec_prompt(spec)
        output = request_plan(config, prompt)
    else:
        result = planner.plan(spec, seed=args.seed, max_iters=args.max_iters)
        output = planner.plan_to_output(spec, result)
        if result.residual:
            for violation in result.residual:
                print(f"residual: {violation.message}", file=sys.stderr)
    _print_json(output.to_dict())
    return EXIT_OK


def _spec_prompt(spec: planner.SceneSpec) -> str:
    parts = [e.phrase for e in spec.entities]
    text = ", ".join(parts)
    if spec.tail:
        text = f"{text}. {spec.tail}" if text else spec.tail
    return text


def _client_config(args) -> ClientConfig:
    doc = {}
    if args.config:
        doc = _read_json(args.config)
    base_url = doc.get("base_url", args.base_url or "")
    if not base_url:
        raise ValueError("--mllm needs --base-url or a config file with base_url")
    return ClientConfig(
        base_url=base_url,
        model_name=doc.get("model_name", args.model or ""),
        api_key_env_var=doc.get("api_key_env_var", "SCOT_API_KEY"),
        temperature=doc.get("temperature", 0.2),
        timeout=doc.get("timeout", 120.0),
        max_retries=doc.get("max_retries", 2),
        max_in_flight=doc.get("max_in_flight", 4),
    )


def cmd_check(args) -> int:
    spec, boxes = _load_scene(args.scene)
    if boxes is None:
        raise ValueError('check needs a "boxes" map in the scene file')
    violations = constraints.check(boxes, spec.categories, spec.constraints)
    _print_json(
        {
            "violations": [
                {
                    "constraint": constraints.constraint_to_dict(v.constraint),
                    "magnitude": v.magnitude,
                    "message": v.message,
                }
                for v in violations
            ],
            "total_magnitude": sum(v.magnitude for v in violations),
        }
    )
    return EXIT_OK


def cmd_repair(args) -> int:
    spec, boxes = _load_scene(args.scene)
    if boxes is None:
        raise ValueError('repair needs a "boxes" map in the scene file')
    result = planner.repair(boxes, spec, max_iters=args.max_iters)
    _print_json(
        {
            "boxes": {eid: b.as_list() for eid, b in result.boxes.items()},
            "iterations": result.iterations,
            "residual": [v.message for v in result.residual],
        }
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    refs = dataset.load_records(args.refs)
    preds = dataset.load_records(args.preds)
    pred_by_id = {r.id: r for r in preds}

    def instances(record):
        return tuple(
            (e.attrs.get("category", e.phrase), e.box) for e in record.entities
        )

    samples = []
    for ref in refs:
        pred = pred_by_id.get(ref.id)
        samples.append(
            metrics.EvalSample(
                id=ref.id,
                references=instances(ref),
                predictions=instances(pred) if pred else (),
            )
        )
    report = metrics.evaluate(samples, iou_threshold=args.iou_threshold)
    print(metrics.format_report(report, per_sample=args.per_sample))
    return EXIT_OK


def cmd_render(args) -> int:
    doc = _read_json(args.input)
    style = render.RenderStyle(canvas_size=args.canvas)
    if "objects" in doc:
        output = planner.parse_planner_output(json.dumps(doc))
        svg = render.render_svg(output, style)
    elif "boxes" in doc:
        lp = planner.LayoutPlan(
            boxes={eid: BBox.from_list(b) for eid, b in doc["boxes"].items()},
            iterations=int(doc.get("iterations", 0)),
            residual=(),
        )
        svg = render.render_svg(lp, style)
    else:
        raise ValueError('render input needs "objects" or "boxes"')
    Path(args.output).write_text(svg, encoding="utf-8")
    print(args.output)
    return EXIT_OK


def cmd_dataset_synth(args) -> int:
    records = dataset.synth_generate(args.seed, args.n, args.max_entities)
    dataset.save_records(args.output, records)
    print(args.output)
    return EXIT_OK


def cmd_dataset_stats(args) -> int:
    records = dataset.load_records(args.input)
    _print_json(dataset.stats(records).to_dict())
    return EXIT_OK


def cmd_dataset_convert(args) -> int:
    records = dataset.load_records(args.input)
    out_lines = [codec.serialize(dataset.record_to_instruction(r)) for r in records]
    if args.output:
        Path(args.output).write_text("\n".join(out_lines) + "\n", encoding="utf-8")
        print(args.output)
    else:
        for line in out_lines:
            print(line)
    return EXIT_OK


def _instruction_from_file(path: str) -> codec.InterleavedInstruction:
    return codec.parse_instruction(_read_text(path).strip())


def cmd_toy_train(args) -> int:
    instruction = _instruction_from_file(args.instruction)
    config = flowmatch.TrainConfig(
        steps=args.steps,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        init_seed=args.init_seed,
        data_seed=args.data_seed,
        noise_seed=args.noise_seed,
    )
    sampler = flowmatch.box_union_sampler(instruction, m=config.m)
    model, curve = flowmatch.train(config, sampler)
    meta = {
        "seeds": [config.init_seed, config.data_seed, config.noise_seed],
        "steps": config.steps,
    }
    flowmatch.save_checkpoint(args.output, model, meta=meta)
    if args.curve:
        flowmatch.save_loss_curve(args.curve, curve)
    _print_json(
        {
            "checkpoint": str(args.output),
            "first100_mean": float(np.mean(curve[:100])),
            "final100_mean": float(np.mean(curve[-100:])),
        }
    )
    return EXIT_OK


def cmd_toy_sample(args) -> int:
    model, _ = flowmatch.load_checkpoint(args.model)
    instruction = _instruction_from_file(args.instruction)
    e = flowmatch.embed_instruction(instruction, m=model.m)
    samples = flowmatch.sample(model, e, args.n, n_steps=args.n_steps, seed=args.seed)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            for row in samples:
                f.write(" ".join(repr(float(v)) for v in row) + "\n")
    _print_json(
        {
            "n": int(samples.shape[0]),
            "in_box_fraction": flowmatch.in_box_fraction(samples, instruction),
        }
    )
    return EXIT_OK


def cmd_toy_gradcheck(args) -> int:
    model = flowmatch.VelocityModel.init(d=2, m=args.m, width=args.width, seed=args.seed)
    rng = np.random.default_rng(args.seed + 1)
    model.set_flat_params(rng.standard_normal(model.flat_params().size) * 0.5)
    x0 = rng.uniform(0.2, 0.8, size=(4, 2))
    x1 = rng.standard_normal((4, 2))
    t = rng.uniform(0.0, 1.0, size=4)
    e = rng.standard_normal((4, args.m))
    _, grads = flowmatch.loss_and_grad_at(model, x0, x1, t, e)
    flat_grad = np.concatenate(
        [grads[n].ravel() for n in ("w1", "b1", "w2", "b2", "w3", "b3")]
    )
    flat = model.flat_params()
    h = 1e-5
    worst = 0.0
    probe = model.copy()
    for idx in rng.choice(flat.size, size=20, replace=False):
        bumped = flat.copy()
        bumped[idx] += h
        probe.set_flat_params(bumped)
        up, _ = flowmatch.loss_and_grad_at(probe, x0, x1, t, e)
        bumped[idx] -= 2 * h
        probe.set_flat_params(bumped)
        down, _ = flowmatch.loss_and_grad_at(probe, x0, x1, t, e)
        numeric = (up - down) / (2 * h)
        denom = max(abs(numeric), abs(flat_grad[idx]), 1e-8)
        worst = max(worst, abs(numeric - flat_grad[idx]) / denom)
    _print_json({"max_relative_error": worst, "tolerance": 1e-4})
    return EXIT_OK if worst <= 1e-4 else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scot",
        description="Spatial layout planning over interleaved text-coordinate instructions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="grounded records -> instruction text")
    p.add_argument("input", help="records file (JSON lines)")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="instruction text -> grounded records")
    p.add_argument("input", help="instruction text file, one per line ('-' for stdin)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("plan", help="scene spec -> planner output")
    p.add_argument("spec", help="scene spec file (JSON)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--mllm", action="store_true", help="delegate to the external planner")
    p.add_argument("--config", help="client config file (JSON)")
    p.add_argument("--base-url")
    p.add_argument("--model")
    p.add_argument("--prompt", help="raw prompt for --mllm (defaults to the spec phrases)")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("check", help="layout + constraints -> violations")
    p.add_argument("scene", help="scene file with entities, constraints, and boxes")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("repair", help="layout + constraints -> repaired plan")
    p.add_argument("scene", help="scene file with entities, constraints, and boxes")
    p.add_argument("--max-iters", type=int, default=200)
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("eval", help="reference/prediction records -> metrics report")
    p.add_argument("--refs", required=True)
    p.add_argument("--preds", required=True)
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--per-sample", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="plan -> SVG")
    p.add_argument("input", help="planner output or layout plan (JSON)")
    p.add_argument("output", help="SVG file to write")
    p.add_argument("--canvas", type=int, default=1000)
    p.set_defaults(func=cmd_render)

    pd = sub.add_parser("dataset", help="synthetic corpora and statistics")
    dsub = pd.add_subparsers(dest="dataset_command", required=True)

    p = dsub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--max-entities", type=int, default=12)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_dataset_synth)

    p = dsub.add_parser("stats", help="corpus statistics")
    p.add_argument("input")
    p.set_defaults(func=cmd_dataset_stats)

    p = dsub.add_parser("convert", help="records -> instruction text lines")
    p.add_argument("input")
    p.add_argument("--output")
    p.set_defaults(func=cmd_dataset_convert)

    pt = sub.add_parser("toy", help="flow-matching toy")
    tsub = pt.add_subparsers(dest="toy_command", required=True)

    p = tsub.add_parser("train", help="train a velocity model on one instruction")
    p.add_argument("--instruction", required=True, help="instruction text file")
    p.add_argument("--output", required=True, help="checkpoint path")
    p.add_argument("--curve", help="loss curve output path")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--learning-rate", type=float, default=1e-2)
    p.add_argument("--init-seed", type=int, default=0)
    p.add_argument("--data-seed", type=int, default=1)
    p.add_argument("--noise-seed", type=int, default=2)
    p.set_defaults(func=cmd_toy_train)

    p = tsub.add_parser("sample", help="sample latents from a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--instruction", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--n-steps", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="write samples as two-column text")
    p.set_defaults(func=cmd_toy_sample)

    p = tsub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--m", type=int, default=16)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_toy_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ClientError,) + _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
