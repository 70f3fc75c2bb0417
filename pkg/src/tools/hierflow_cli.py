# hierflow_cli.py
"""
Command-line entry point: hierflow fit | cut | synth | eval

Exit codes: 0 ok, 2 usage or input error, 3 numerical degeneracy.
"""
import os
import sys
import json
import logging

import click
import numpy as np

# Make src/ importable when run as a script
src_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if src_dir not in sys.path:
    sys.path.insert(0, src_dir)

from config import EXIT_DEGENERATE_FIT, EXIT_INPUT_ERROR, PREFIT_LEVEL, TOOL_VERSION
from hierflow.config_utils import build_fit_config, load_user_config, resolve_worker_count
from hierflow.data_structures import FlowNetwork, ModelParams, NodeRecord, ObjectiveSpec
from hierflow.exceptions import (DegenerateFitError, HierflowError, InputValidationError,
                                 ModelEvaluationError)
from hierflow.exports import (from_newick, ladder_from_newick, read_model_json, read_partition_json,
                              write_model_json, write_move_log_csv, write_newick, write_partition_csv,
                              write_partition_geojson, write_partition_json, write_report_json)
from hierflow.file_handlers import load_network, parse_distance_csv, parse_nodes_csv, reorder_network, write_edge_csv
from hierflow.fitting import fit_with_restarts
from hierflow.geo_utils import build_distance_matrix, unit_distance_matrix
from hierflow.hierarchy import (cut_at_level, cut_to_k, flat_hierarchy, partition_agreement, planted_hierarchy,
                                planted_partition)
from hierflow.model import objective, sample_poisson_network
from utils.folder_utils import setup_output_directory
from utils.logging_utils import setup_logging
from utils.process_logging import create_run_manifest_start, finish_run_manifest

logger = logging.getLogger(__name__)

HANDLED_ERRORS = (HierflowError, FileNotFoundError, NotADirectoryError)


def _exit_code_for(error):
    if isinstance(error, (DegenerateFitError, ModelEvaluationError)):
        return EXIT_DEGENERATE_FIT
    return EXIT_INPUT_ERROR


def _fail(error):
    click.echo(f"Error: {error}", err=True)
    sys.exit(_exit_code_for(error))


def _parse_floats(text, what):
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise InputValidationError(f"{what} must be comma-separated numbers, got '{text}'")


def _ladder_overrides(levels):
    """--levels accepts a ladder size L or an explicit comma-separated ladder"""
    if levels is None:
        return {}
    if "," in levels or "." in levels:
        return {"ladder": _parse_floats(levels, "--levels")}
    try:
        return {"ladder_size": int(levels)}
    except ValueError:
        raise InputValidationError(f"--levels must be an integer or a list of levels, got '{levels}'")


def _read_hierarchy(path, node_ids=None):
    if not os.path.exists(path):
        raise FileNotFoundError(f"Hierarchy file not found at: {path}")
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    ladder = ladder_from_newick(text) or (0.5,)
    return from_newick(text, ladder, node_ids)


def _fit_distances(net, cfg, distances_path):
    if cfg.mode == "generic":
        if distances_path:
            logger.warning("Generic mode ignores the distance file")
        return unit_distance_matrix(net)
    explicit = parse_distance_csv(distances_path, net) if distances_path else None
    return build_distance_matrix(net, cfg.bins, explicit)


def _model_distances(net, params, bins, distances_path=None):
    if params.g.size == 1:
        return unit_distance_matrix(net)
    explicit = parse_distance_csv(distances_path, net) if distances_path else None
    return build_distance_matrix(net, bins, explicit)


@click.group()
@click.version_option(TOOL_VERSION, prog_name="hierflow")
def cli():
    """Infer ultrametric hierarchies of (spatial) flow networks."""


@cli.command("fit")
@click.option("--edges", required=True, type=click.Path(), help="Edge CSV (origin,destination,weight)")
@click.option("--nodes", default=None, type=click.Path(), help="Node CSV (id,label,lat,lon)")
@click.option("--distances", default=None, type=click.Path(), help="Pairwise distance CSV (id_a,id_b,km)")
@click.option("--mode", default=None, type=click.Choice(["spatial", "generic", "prefit"]))
@click.option("--objective", "objective_kind", default=None,
              type=click.Choice(["ls", "poisson", "least-squares", "poisson-normal"]))
@click.option("--levels", default=None, help="Ladder size L, or comma-separated levels in (0,1)")
@click.option("--bins", "bin_count", default=None, type=int, help="Number of distance bins")
@click.option("--bin-mode", default=None, type=click.Choice(["linear", "log", "logarithmic", "explicit"]))
@click.option("--bin-edges", default=None, help="Comma-separated bin upper edges in km")
@click.option("--seed", default=None, type=int)
@click.option("--max-sweeps", default=None, type=int)
@click.option("--restarts", default=1, show_default=True, type=int)
@click.option("--config", "config_path", default=None, type=click.Path(), help="JSON file overriding fit defaults")
@click.option("--out-dir", required=True, type=click.Path())
def fit_command(edges, nodes, distances, mode, objective_kind, levels, bin_count, bin_mode, bin_edges, seed,
                max_sweeps, restarts, config_path, out_dir):
    """Fit weights, distance deterrence and hierarchy to a flow network."""
    manifest = None
    try:
        paths = setup_output_directory(out_dir)
        _, log_file = setup_logging(out_dir, "hierflow_fit")
        overrides = load_user_config(config_path) if config_path else {}
        overrides.update({
            "mode": mode,
            "objective": objective_kind,
            "bin_count": bin_count,
            "bin_mode": bin_mode,
            "bin_edges": _parse_floats(bin_edges, "--bin-edges") if bin_edges else None,
            "seed": seed,
            "outer_max_sweeps": max_sweeps,
        })
        overrides.update(_ladder_overrides(levels))
        cfg = build_fit_config(overrides)
        cfg = cfg.replace(workers=resolve_worker_count(cfg.workers))
        inputs = {"edges": edges, "nodes": nodes, "distances": distances, "config": config_path}
        manifest = create_run_manifest_start(out_dir, "fit", inputs, dict(cfg.to_dict(), restarts=restarts))

        net = load_network(edges, nodes)
        dist = _fit_distances(net, cfg, distances)
        report = fit_with_restarts(net, dist, cfg, restarts)

        kind = cfg.objective.kind
        write_model_json(report.params, report.hierarchy, dist.bins, kind, report.objective, cfg.mode,
                         paths["model"])
        write_newick(report.hierarchy, paths["hierarchy"])
        write_report_json(report, paths["report"], cfg)
        write_move_log_csv(report.moves, paths["moves"])
        outputs = {"model": paths["model"], "hierarchy": paths["hierarchy"], "report": paths["report"],
                   "moves": paths["moves"], "log": log_file}
        if report.prefit_params is not None:
            flat = flat_hierarchy(net.n, PREFIT_LEVEL, node_ids=net.node_ids)
            write_model_json(report.prefit_params, flat, dist.bins, kind, report.prefit_objective,
                             "gravity-only", paths["gravity_model"])
            outputs["gravity_model"] = paths["gravity_model"]
        finish_run_manifest(out_dir, manifest, outputs)
        click.echo(json.dumps({"objective": report.objective, "converged": report.converged,
                               "sweeps": report.sweeps, "moves": len(report.moves),
                               "prefit_objective": report.prefit_objective}))
    except HANDLED_ERRORS as e:
        logger.error(f"fit failed: {e}")
        if manifest is not None:
            finish_run_manifest(out_dir, manifest, status="failed", error=str(e))
        _fail(e)


@cli.command("cut")
@click.option("--hierarchy", "hierarchy_path", required=True, type=click.Path(), help="Newick hierarchy")
@click.option("--level", default=None, type=float, help="Cut level t in [0, 1]")
@click.option("--k", "k", default=None, type=int, help="Number of communities")
@click.option("--format", "out_format", default="json", show_default=True,
              type=click.Choice(["json", "geojson", "csv"]))
@click.option("--nodes", default=None, type=click.Path(), help="Node CSV with coordinates for GeoJSON")
@click.option("--out", "out_path", required=True, type=click.Path())
def cut_command(hierarchy_path, level, k, out_format, nodes, out_path):
    """Section a fitted hierarchy into communities."""
    if (level is None) == (k is None):
        click.echo("Error: give exactly one of --level or --k", err=True)
        sys.exit(EXIT_INPUT_ERROR)
    try:
        hier = _read_hierarchy(hierarchy_path)
        partition = cut_at_level(hier, level) if level is not None else cut_to_k(hier, k)
        if not partition.exact:
            click.echo(f"Warning: no section has exactly {k} communities; "
                       f"wrote {partition.n_communities} at level {partition.level}", err=True)
        if out_format == "json":
            write_partition_json(partition, out_path)
        elif out_format == "csv":
            write_partition_csv(partition, out_path)
        else:
            records = parse_nodes_csv(nodes) if nodes else []
            if not records:
                click.echo("Warning: no node coordinates given; GeoJSON geometries are null", err=True)
            write_partition_geojson(partition, records, out_path)
        click.echo(json.dumps({"communities": partition.n_communities, "level": partition.level,
                               "exact": partition.exact, "out": out_path}))
    except HANDLED_ERRORS as e:
        _fail(e)


def _parse_planted(text):
    parts = [part.strip() for part in text.split(",")]
    if len(parts) != 4:
        raise InputValidationError(f"--planted expects 'n,k,within,between', got '{text}'")
    try:
        return int(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])
    except ValueError:
        raise InputValidationError(f"--planted expects 'n,k,within,between', got '{text}'")


def _top_section(hier):
    """Ground truth of a given hierarchy: the communities directly under the root"""
    heights = sorted(set(float(h) for h in hier.height[hier.n_leaves:]))
    return cut_at_level(hier, heights[-2] if len(heights) > 1 else 0.0)


@cli.command("synth")
@click.option("--params", "params_path", default=None, type=click.Path(), help="Model JSON with weights and g")
@click.option("--base-weight", default=10.0, show_default=True, type=float,
              help="w_out = w_in for every node when no --params is given")
@click.option("--hierarchy", "hierarchy_path", default=None, type=click.Path(), help="Newick hierarchy")
@click.option("--planted", default=None, help="Planted hierarchy 'n,k,within,between'")
@click.option("--nodes", default=None, type=click.Path(), help="Node CSV (coordinates for spatial g)")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out-edges", required=True, type=click.Path())
@click.option("--out-truth", required=True, type=click.Path())
def synth_command(params_path, base_weight, hierarchy_path, planted, nodes, seed, out_edges, out_truth):
    """Sample a Poisson network from a model and a hierarchy."""
    if (hierarchy_path is None) == (planted is None):
        click.echo("Error: give exactly one of --hierarchy or --planted", err=True)
        sys.exit(EXIT_INPUT_ERROR)
    try:
        params, bins = None, None
        if params_path:
            params, _, bins, _ = read_model_json(params_path)
        records = parse_nodes_csv(nodes) if nodes else None

        if planted:
            n, k, within, between = _parse_planted(planted)
            if params is not None:
                node_ids = params.node_ids
            elif records is not None:
                node_ids = tuple(record.id for record in records)
            else:
                node_ids = tuple(str(i) for i in range(n))
            if len(node_ids) != n:
                raise InputValidationError(f"planted n = {n} but {len(node_ids)} nodes are defined")
            hier = planted_hierarchy(n, k, within, between, node_ids=node_ids)
            truth = planted_partition(n, k, node_ids)
        else:
            hier = _read_hierarchy(hierarchy_path, params.node_ids if params is not None else None)
            truth = _top_section(hier)
        node_ids = hier.node_ids

        if params is None:
            n = hier.n_leaves
            params = ModelParams(w_out=np.full(n, base_weight), w_in=np.full(n, base_weight), g=[1.0],
                                 node_ids=node_ids)
        if records is not None:
            by_id = {record.id: record for record in records}
            missing = [node_id for node_id in node_ids if node_id not in by_id]
            if missing:
                raise InputValidationError(f"node file lacks hierarchy nodes: {missing}")
            records = tuple(by_id[node_id] for node_id in node_ids)
        else:
            records = tuple(NodeRecord(id=node_id, label=node_id) for node_id in node_ids)
        skeleton = FlowNetwork(nodes=records, flows=np.zeros((len(records), len(records))))
        dist = _model_distances(skeleton, params, bins)

        net = sample_poisson_network(params, hier, dist, seed, nodes=records)
        write_edge_csv(net, out_edges)
        write_partition_json(truth, out_truth)
        click.echo(json.dumps({"nodes": net.n, "total_flow": float(net.flows.sum()),
                               "communities": truth.n_communities, "edges": out_edges, "truth": out_truth}))
    except HANDLED_ERRORS as e:
        _fail(e)


@cli.command("eval")
@click.option("--partition", "partition_path", default=None, type=click.Path())
@click.option("--truth", "truth_path", default=None, type=click.Path())
@click.option("--model", "model_path", default=None, type=click.Path())
@click.option("--edges", default=None, type=click.Path())
@click.option("--nodes", default=None, type=click.Path())
@click.option("--distances", default=None, type=click.Path())
def eval_command(partition_path, truth_path, model_path, edges, nodes, distances):
    """Score a partition against a truth and/or recompute a model's objective."""
    scoring = partition_path is not None or truth_path is not None
    recomputing = model_path is not None or edges is not None
    if not (scoring or recomputing):
        click.echo("Error: give --partition/--truth and/or --model/--edges", err=True)
        sys.exit(EXIT_INPUT_ERROR)
    try:
        result = {}
        if scoring:
            if partition_path is None or truth_path is None:
                raise InputValidationError("--partition and --truth must be given together")
            result["agreement"] = partition_agreement(read_partition_json(partition_path),
                                                      read_partition_json(truth_path))
        if recomputing:
            if model_path is None or edges is None:
                raise InputValidationError("--model and --edges must be given together")
            params, hier, bins, data = read_model_json(model_path)
            if hier is None:
                raise InputValidationError(f"model file {model_path} carries no hierarchy")
            net = reorder_network(load_network(edges, nodes), params.node_ids)
            dist = _model_distances(net, params, bins, distances)
            kind = data.get("objective", {}).get("kind", "poisson-normal")
            result["objective"] = objective(net, params, hier, dist, ObjectiveSpec(kind=kind))
            result["objective_kind"] = kind
        click.echo(json.dumps(result, indent=2))
    except HANDLED_ERRORS as e:
        _fail(e)


if __name__ == "__main__":
    cli()
