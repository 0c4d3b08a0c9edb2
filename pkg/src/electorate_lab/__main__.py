import logging
import sys
from argparse import ArgumentParser

from electorate_lab.commands import analyze, classify, equilibrium, fit, predict, simulate
from electorate_lab.exceptions import ElectorateLabError

_LOGGER = logging.getLogger("electorate_lab")


def main(argv=None):
    parser = ArgumentParser(description="Simulate electorates and measure voter indifference.")
    parser.add_argument("--verbose", action="store_true", help="Log debug messages.")
    subparsers = parser.add_subparsers(required=True)

    common = ArgumentParser(add_help=False)
    common.add_argument("--config", help="Experiment configuration (JSON).")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a configuration value, e.g. loss.family=ReverseS. Repeatable.")
    common.add_argument("--seed", type=int, help="Random seed; overrides the configured seed.")
    common.add_argument("--out", help="Output directory; overrides output_dir.")
    common.add_argument("--threads", type=int, help="Worker threads (default: $ELECTORATE_LAB_THREADS or 1).")

    with_cvr = ArgumentParser(add_help=False)
    with_cvr.add_argument("--cvr", dest="cvr_path", help="CVR file to read instead of <out>/cvr.csv.")

    simulate_parser = subparsers.add_parser('simulate', parents=[common], help='Simulate ballots and write a CVR file.')
    simulate_parser.add_argument("--quiet", action="store_true", help="Hide the progress bar.")
    simulate_parser.set_defaults(func=simulate)

    analyze_parser = subparsers.add_parser('analyze', parents=[common, with_cvr], help='Group measures of a CVR file.')
    analyze_parser.set_defaults(func=analyze)

    fit_parser = subparsers.add_parser('fit', parents=[common, with_cvr], help='Polarization regressions.')
    fit_parser.set_defaults(func=fit)

    predict_parser = subparsers.add_parser('predict', parents=[common], help='Predicted trend of each loss family.')
    predict_parser.set_defaults(func=predict)

    equilibrium_parser = subparsers.add_parser('equilibrium', parents=[common], help='Platform competition between two candidates.')
    equilibrium_parser.set_defaults(func=equilibrium)

    classify_parser = subparsers.add_parser('classify', parents=[common, with_cvr], help='Classify the measured indifference trends.')
    classify_parser.set_defaults(func=classify)

    args = parser.parse_args(argv)
    # pop func and logging flags from args
    args = vars(args)
    func = args.pop("func")
    verbose = args.pop("verbose")
    logging.basicConfig(
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        level=logging.DEBUG if verbose else logging.INFO,
    )

    try:
        func(**args)
    except ElectorateLabError as e:
        _LOGGER.error("%s", e)
        sys.exit(e.exit_code)


if __name__ == '__main__':
    main()
