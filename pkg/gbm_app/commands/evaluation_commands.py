"""evaluate and compare."""
import logging

from evaluation import compare_products, evaluate_dirs

logger = logging.getLogger(__name__)


def _product(text):
    name, sep, path = text.partition('=')
    if not sep or not name or not path:
        raise ValueError(f"expected name=<dir>, got {text!r}")
    return name, path


def _common(p):
    p.add_argument('--ref-dir', required=True)
    p.add_argument('--groups', required=True, help='CSV with patch_id,city,continent')
    p.add_argument('--macro', action='store_true', help='average per-patch scores instead of pooling counts')
    p.add_argument('--out', required=True)


def register(subparsers):
    p = subparsers.add_parser('evaluate', help='F1/IoU of predicted masks per city, continent and world')
    p.add_argument('--pred-dir', required=True)
    _common(p)
    p.set_defaults(handler=run_evaluate)

    p = subparsers.add_parser('compare', help='Score several prediction sets against one reference')
    p.add_argument('--product', type=_product, action='append', required=True, help='name=<dir>')
    _common(p)
    p.set_defaults(handler=run_compare)


def run_evaluate(args) -> int:
    table = evaluate_dirs(args.pred_dir, args.ref_dir, args.groups, 'macro' if args.macro else 'micro')
    table.to_csv(args.out, index=False)
    logger.info(f"Scored {args.pred_dir} -> {args.out}")
    return 0


def run_compare(args) -> int:
    products = dict(args.product)
    table = compare_products(products, args.ref_dir, args.groups, 'macro' if args.macro else 'micro')
    table.to_csv(args.out, index=False)
    logger.info(f"Compared {', '.join(products)} -> {args.out}")
    return 0
