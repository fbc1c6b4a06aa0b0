#!/usr/bin/env python3
"""
Command-line front end for the macro regulator

    python regulator_cli.py place design.aux --alpha 0.5 --grid 224
    python regulator_cli.py regulate design.aux --init design.pl --passes 2
    python regulator_cli.py train --synthetic 42,10,20 --grid 32 --episodes 200
    python regulator_cli.py eval design.aux design.pl
    python regulator_cli.py ablate --synthetic 42,10,20 --grid 32 --alphas 0.1,0.5,0.9
    python regulator_cli.py render design.aux design.pl --svg design.svg

Exit codes: 0 ok, 1 I/O, 2 parse/config, 3 infeasible, 4 invalid placement,
5 numeric failure.
"""

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import pandas as pd

import bookshelf
from agent import greedy_act, greedy_place, policy_chooser, regulate_passes
from config import RegulatorConfig
from errors import ConfigError, InvalidInitialPlacement, IoError, RegulatorError
from geometry import Canvas, Mode, PlacementState, overlapping_pairs
from layout_svg import render_svg
from metrics import metric_row, write_metrics_csv
from ppo_trainer import load_checkpoint, save_checkpoint, train, write_curve_csv
from regulator_env import ABLATION_PRESETS, ablation_config, evaluate

ABLATION_COLUMNS = ['variant', 'alpha', 'method', 'hpwl', 'regularity_total', 'free_regions']


# Inputs

def _parse_synthetic(text: str) -> Tuple[int, int, int]:
    try:
        seed, k, n = (int(part) for part in text.split(','))
    except ValueError:
        raise ConfigError(f"--synthetic expects seed,k,n; got {text!r}")
    return seed, k, n


def load_instance(args, config: RegulatorConfig) -> Tuple[str, bookshelf.Netlist]:
    """(instance name, netlist) from an .aux path or a seed,k,n synthetic triple"""
    if getattr(args, 'input', None) and not args.synthetic:
        netlist = bookshelf.parse_bundle(args.input, config.PROMOTE_FIXED_MACROS)
        return Path(args.input).stem, netlist
    if args.synthetic:
        seed, k, n = _parse_synthetic(args.synthetic)
    else:
        seed, k, n = config.SYNTHETIC_SEED, config.SYNTHETIC_MACROS, config.SYNTHETIC_NETS
    side = config.SYNTHETIC_CANVAS
    netlist = bookshelf.gen_synthetic(seed, k, n, (side, side), config.SYNTHETIC_TERMINALS)
    print(f"🧭 Synthetic instance seed={seed}, {k} macros, {n} nets")
    return f"synthetic_{seed}_{k}_{n}", netlist


def read_positions(netlist: bookshelf.Netlist, pl_path: Optional[str]) -> Dict[str, Tuple[float, float]]:
    """Micron positions from a .pl, or the bundle's own .pl"""
    if pl_path:
        return bookshelf.read_pl(netlist, pl_path)
    return dict(netlist.initial)


def load_placement(netlist: bookshelf.Netlist, canvas: Canvas, pl_path: Optional[str],
                   mode: Mode = Mode.PLACE,
                   positions: Optional[Dict[str, Tuple[float, float]]] = None) -> PlacementState:
    """Grid state from a .pl (or the bundle's own .pl); overlapping input is rejected"""
    if positions is None:
        positions = read_positions(netlist, pl_path)
    pairs = overlapping_pairs(netlist, positions)
    if pairs:
        a, b = pairs[0]
        raise InvalidInitialPlacement(f"placement overlaps: {a} and {b} ({len(pairs)} pairs)")
    state = PlacementState.from_microns(netlist, canvas, positions, mode)
    moved = [mid for mid, xy in positions.items() if state.micron_position(mid) != tuple(xy)]
    if moved:
        print(f"⚠️ {len(moved)} macros snapped to the {canvas.n_grid}x{canvas.n_grid} grid")
    return state


# Outputs

def _out_dir(config: RegulatorConfig) -> Path:
    out = Path(config.OUT_DIR)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create output directory {out}: {e}")
    return out


def _save_config(config: RegulatorConfig, out: Path, name: str, command: str):
    config.save(out / f"{name}.{command}.config")


# Commands

def cmd_parse(args, config: RegulatorConfig) -> int:
    name, netlist = load_instance(args, config)
    out = _out_dir(config)
    dump = out / f"{name}.netlist.txt"
    try:
        dump.write_text(bookshelf.dump_netlist(netlist))
    except OSError as e:
        raise IoError(f"cannot write {dump}: {e}")
    if args.write_bundle:
        bookshelf.write_bundle(netlist, None, out, name)
    _save_config(config, out, name, 'parse')
    print(f"✅ {name}: {len(netlist.macros)} macros, {len(netlist.terminals)} terminals, "
          f"{len(netlist.nets)} nets, hash {bookshelf.structural_hash(netlist)}")
    return 0


def cmd_place(args, config: RegulatorConfig) -> int:
    name, netlist = load_instance(args, config)
    out = _out_dir(config)
    state = greedy_place(netlist, config.GRID, config.ORDER_RULE, config.ALPHA)
    bookshelf.write_pl(netlist, state, out / f"{name}.pl")
    write_metrics_csv([metric_row(name, 0, state)], out / f"{name}.metrics.csv")
    _save_config(config, out, name, 'place')
    hpwl, regularity = evaluate(netlist, state)
    print(f"✅ Placed {len(netlist.macros)} macros: hpwl {hpwl:.4f}, regularity {regularity:.4f}")
    return 0


def cmd_regulate(args, config: RegulatorConfig) -> int:
    name, netlist = load_instance(args, config)
    out = _out_dir(config)
    env_config = config.env_config(mode=Mode.REGULATE)

    if config.POLICY == 'greedy':
        choose = lambda obs: greedy_act(obs, env_config.alpha)
        canvas = Canvas.for_netlist(netlist, env_config.n_grid)
    else:
        policy, _ = load_checkpoint(config.POLICY)
        if policy.n_grid != env_config.n_grid:
            print(f"⚠️ Checkpoint grid {policy.n_grid} replaces --grid {env_config.n_grid}")
            env_config = config.env_config(mode=Mode.REGULATE, n_grid=policy.n_grid)
        canvas = Canvas.for_netlist(netlist, env_config.n_grid)
        choose = policy_chooser(policy, canvas)

    if config.INIT == 'greedy':
        initial = greedy_place(netlist, canvas.n_grid, env_config.order_rule)
    elif config.INIT == 'input':
        initial = load_placement(netlist, canvas, None)
    else:
        initial = load_placement(netlist, canvas, config.INIT)
    if not initial.is_complete():
        raise InvalidInitialPlacement("initial placement does not place every macro")

    print(f"🧭 Regulating {name}: {config.PASSES} passes, alpha {env_config.alpha}, policy {config.POLICY}")
    final, records = regulate_passes(netlist, initial, env_config, choose, config.PASSES)

    rows = [metric_row(name, 0, initial)]
    if records:
        rows.append(metric_row(name, len(records), final))
    bookshelf.write_pl(netlist, final, out / f"{name}.regulated.pl")
    write_metrics_csv(rows, out / f"{name}.metrics.csv")
    _write_passes(records, out / f"{name}.passes.csv")
    _save_config(config, out, name, 'regulate')
    before, after = evaluate(netlist, initial)[0], evaluate(netlist, final)[0]
    print(f"✅ Regulated hpwl {before:.4f} -> {after:.4f}")
    return 0


def _write_passes(records, path: Path):
    frame = pd.DataFrame([vars(record) for record in records],
                         columns=['index', 'hpwl', 'regularity', 'status'])
    try:
        frame.to_csv(path, index=False)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}")


def cmd_train(args, config: RegulatorConfig) -> int:
    name, netlist = load_instance(args, config)
    out = _out_dir(config)
    env_config = config.env_config()
    ppo_config = config.ppo_config()
    initial = None
    if env_config.mode == Mode.REGULATE and config.INIT not in ('greedy',):
        canvas = Canvas.for_netlist(netlist, env_config.n_grid)
        initial = load_placement(netlist, canvas, None if config.INIT == 'input' else config.INIT)

    result = train(netlist, env_config, ppo_config, initial, progress=not args.quiet)
    meta = {'instance': name, 'mode': env_config.mode.value, 'best_hpwl': result.best_hpwl}
    save_checkpoint(out / f"{name}.ckpt", result.policy, ppo_config, meta, result.best_state_dict)
    write_curve_csv(result.curve, out / f"{name}.curve.csv")
    if result.best_placement is not None:
        bookshelf.write_pl(netlist, result.best_placement, out / f"{name}.trained.pl")
    _save_config(config, out, name, 'train')
    return 0


def cmd_eval(args, config: RegulatorConfig) -> int:
    name, netlist = load_instance(args, config)
    out = _out_dir(config)
    canvas = Canvas.for_netlist(netlist, config.GRID)
    positions = read_positions(netlist, args.placement)
    state = load_placement(netlist, canvas, args.placement, positions=positions)
    if not state.is_complete():
        raise InvalidInitialPlacement("placement does not place every macro")
    # hpwl and regularity from the file's microns; free regions need the grid
    row = metric_row(name, 0, state, positions)
    write_metrics_csv([row], out / f"{name}.eval.csv")
    _save_config(config, out, name, 'eval')
    print(f"📊 hpwl {row['hpwl']!r}")
    print(f"📊 regularity total {row['regularity_total']!r}, mean {row['regularity_mean']!r}")
    print(f"📊 free regions {row['free_regions']}, overlap-free yes")
    return 0


def _greedy_variant(netlist, env_config) -> PlacementState:
    if env_config.mode == Mode.PLACE:
        return greedy_place(netlist, env_config.n_grid, env_config.order_rule, env_config.alpha)
    initial = greedy_place(netlist, env_config.n_grid, env_config.order_rule)
    final, _ = regulate_passes(netlist, initial, env_config,
                               lambda obs: greedy_act(obs, env_config.alpha))
    return final


def _ablation_row(variant: str, alpha: float, method: str, state: PlacementState):
    row = metric_row(variant, 0, state)
    return {'variant': variant, 'alpha': alpha, 'method': method, 'hpwl': row['hpwl'],
            'regularity_total': row['regularity_total'], 'free_regions': row['free_regions']}


def cmd_ablate(args, config: RegulatorConfig) -> int:
    """alpha sweep and/or named presets; greedy unless --train with --episodes > 0"""
    name, netlist = load_instance(args, config)
    out = _out_dir(config)
    base = config.env_config()
    runs = []
    if args.alphas:
        for alpha in (float(a) for a in args.alphas.split(',')):
            runs.append((f"alpha_{alpha:g}", config.env_config(mode=Mode.REGULATE, alpha=alpha)))
    presets = args.presets.split(',') if args.presets else ([] if args.alphas else list(ABLATION_PRESETS))
    for preset in presets:
        runs.append((preset, ablation_config(preset, base)))

    rows = []
    for variant, env_config in runs:
        if config.EPISODES > 0 and args.train:
            result = train(netlist, env_config, config.ppo_config(alpha=env_config.alpha),
                           progress=not args.quiet)
            if result.best_placement is None:
                print(f"⚠️ {variant}: no completed episode")
                continue
            rows.append(_ablation_row(variant, env_config.alpha, 'ppo', result.best_placement))
        else:
            rows.append(_ablation_row(variant, env_config.alpha, 'greedy',
                                      _greedy_variant(netlist, env_config)))
        print(f"🧭 {variant}: hpwl {rows[-1]['hpwl']:.4f}, regularity {rows[-1]['regularity_total']:.4f}")

    path = out / f"{name}.ablation.csv"
    try:
        pd.DataFrame(rows, columns=ABLATION_COLUMNS).to_csv(path, index=False)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}")
    _save_config(config, out, name, 'ablate')
    print(f"✅ Wrote {len(rows)} ablation rows to {path}")
    return 0


def cmd_render(args, config: RegulatorConfig) -> int:
    name, netlist = load_instance(args, config)
    out = _out_dir(config)
    if args.placement:
        positions = bookshelf.read_pl(netlist, args.placement)
    else:
        positions = dict(netlist.initial)
    svg = Path(args.svg) if args.svg else out / f"{name}.svg"
    render_svg(netlist, positions, svg, config.GRID if config.GRID_LINES else None)
    _save_config(config, out, name, 'render')
    return 0


COMMANDS = {
    'parse': cmd_parse,
    'place': cmd_place,
    'regulate': cmd_regulate,
    'train': cmd_train,
    'eval': cmd_eval,
    'ablate': cmd_ablate,
    'render': cmd_render,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('input', nargs='?', help='Bookshelf .aux file')
    common.add_argument('--synthetic', help='seed,k,n synthetic instance instead of input')
    common.add_argument('--config', help='key = value config file')
    common.add_argument('--out', dest='out_dir', help='output directory')
    common.add_argument('--grid', type=int, help='grid size N')
    common.add_argument('--alpha', type=float, help='wirelength weight in [0, 1]')
    common.add_argument('--seed', type=int)
    common.add_argument('--order-rule', choices=['area_desc', 'net_count_desc', 'area_then_nets'])
    common.add_argument('--promote-fixed-macros', action='store_const', const=True, default=None)
    common.add_argument('--quiet', action='store_true', help='no config summary or progress bars')

    ppo = argparse.ArgumentParser(add_help=False)
    ppo.add_argument('--mode', choices=['place', 'regulate'])
    ppo.add_argument('--episodes', type=int)
    ppo.add_argument('--learning-rate', '--lr', dest='learning_rate', type=float)
    ppo.add_argument('--update-epochs', type=int)
    ppo.add_argument('--batch-size', type=int)
    ppo.add_argument('--buffer-capacity', type=int)
    ppo.add_argument('--clip-eps', type=float)
    ppo.add_argument('--grad-clip-norm', type=float)
    ppo.add_argument('--gamma', type=float)
    ppo.add_argument('--entropy-coef', type=float)
    ppo.add_argument('--value-coef', type=float)
    ppo.add_argument('--no-normalize-reward', dest='normalize_reward', action='store_const', const=False)
    ppo.add_argument('--no-regular-mask', dest='use_regular_mask', action='store_const', const=False)
    ppo.add_argument('--strict-blocking', dest='relax_unadjusted', action='store_const', const=False,
                     help='unadjusted macros also block in Regulate mode')
    ppo.add_argument('--relax-unadjusted', dest='relax_unadjusted', action='store_const', const=True,
                     help='only adjusted macros and terminals block in Regulate mode')
    ppo.add_argument('--mask-prior', type=float,
                     help='initial weight of the blended mask scores in the policy logits')

    parser = argparse.ArgumentParser(description='Macro placement regulator')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('parse', parents=[common], help='parse a bundle and dump the netlist')
    p.add_argument('--write-bundle', action='store_true')

    sub.add_parser('place', parents=[common], help='greedy placement from an empty canvas')

    p = sub.add_parser('regulate', parents=[common, ppo], help='regulate an existing placement')
    p.add_argument('--init', help='.pl path, "input" or "greedy"')
    p.add_argument('--policy', help='checkpoint path or "greedy"')
    p.add_argument('--passes', type=int)

    p = sub.add_parser('train', parents=[common, ppo], help='train the PPO policy')
    p.add_argument('--init', help='.pl path, "input" or "greedy"')

    p = sub.add_parser('eval', parents=[common], help='metrics of a placement')
    p.add_argument('placement', nargs='?', help='.pl file (default: the bundle .pl)')

    p = sub.add_parser('ablate', parents=[common, ppo], help='alpha sweep and preset ablations')
    p.add_argument('--alphas', help='comma-separated alpha values')
    p.add_argument('--presets', help=f"comma-separated from {','.join(ABLATION_PRESETS)}")
    p.add_argument('--train', action='store_true', help='train each variant instead of greedy')

    p = sub.add_parser('render', parents=[common], help='SVG of a placement')
    p.add_argument('placement', nargs='?', help='.pl file (default: the bundle .pl)')
    p.add_argument('--svg', help='output .svg path')
    p.add_argument('--grid-lines', action='store_const', const=True, default=None)
    return parser


CONFIG_FLAGS = [
    'out_dir', 'grid', 'alpha', 'seed', 'order_rule', 'promote_fixed_macros',
    'mode', 'episodes', 'learning_rate', 'update_epochs', 'batch_size', 'buffer_capacity',
    'clip_eps', 'grad_clip_norm', 'gamma', 'entropy_coef', 'value_coef', 'mask_prior',
    'normalize_reward', 'use_regular_mask', 'relax_unadjusted',
    'init', 'policy', 'passes', 'grid_lines',
]


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code"""
    args = build_parser().parse_args(argv)
    overrides = {key: getattr(args, key) for key in CONFIG_FLAGS if hasattr(args, key)}
    try:
        config = RegulatorConfig(args.config, overrides, quiet=args.quiet)
        return COMMANDS[args.command](args, config)
    except RegulatorError as e:
        print(f"❌ {type(e).__name__}: {e}")
        return e.exit_code
    except ValueError as e:
        print(f"❌ Invalid argument: {e}")
        return ConfigError.exit_code
    except KeyboardInterrupt:
        print("\n🛑 Interrupted")
        return 130


if __name__ == "__main__":
    sys.exit(main())
