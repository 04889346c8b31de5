"""
Repeat acquire -> design -> simulate over seeds and aggregate.

Usage:
    python manage.py montecarlo --config duffing_k1.json --out k1.summary --trials 100
    python manage.py montecarlo --config duffing_k1.json --out k1_scaled.summary --trials 20 --delta-scales 1,2,4
"""

from django.conf import settings

from dfk.artifact_services import write_key_values, write_rows
from dfk.management.pipeline_command import PipelineCommand, sidecar
from dfk.pipeline_services import degradation_study, load_config, monte_carlo, recorded_run


def _scales(text):
    return [float(part) for part in text.split(',') if part.strip()]


class Command(PipelineCommand):
    help = 'Monte Carlo study of the full design pipeline'

    def add_arguments(self, parser):
        self.add_config_argument(parser)
        parser.add_argument('--out', type=str, required=True, help='Summary file to write')
        parser.add_argument('--trials', type=int, help='Number of trials (default from config)')
        self.add_seed_argument(parser)
        parser.add_argument('--workers', type=int, help='Parallel worker processes')
        parser.add_argument('--delta-scales', type=_scales, help='Comma-separated delta inflations')

    def handle(self, *args, **options):
        config = load_config(options['config'])
        montecarlo = config['montecarlo']
        n_trials = options['trials'] or montecarlo['n_trials']
        base_seed = config['seed'] if options['seed'] is None else options['seed']
        workers = options['workers'] or montecarlo.get('workers') or settings.DFK_CONFIG['montecarlo_workers']
        scales = options['delta_scales'] or montecarlo.get('delta_scales')
        if n_trials < 1:
            raise ValueError('--trials must be at least 1')

        with recorded_run('montecarlo', options['config'], options['out'], config) as run:
            if scales:
                summaries = degradation_study(config, scales, n_trials, base_seed=base_seed, workers=workers)
            else:
                summaries = [monte_carlo(config, n_trials, base_seed=base_seed, workers=workers)]
            values, rows = self._tabulate(summaries, with_scale=bool(scales))
            write_key_values(options['out'], values)
            header = summaries[0].header()
            if scales:
                header = ['delta_scale'] + header
            write_rows(sidecar(options['out'], 'trials.csv'), header, rows)
            run.metrics = values

        for summary in summaries:
            rms = ', '.join(f"{value:.4g}" for value in summary.mean_rms)
            self.stdout.write(
                f"delta x{summary.delta_scale:g}: mean RMS [{rms}], mean selected {summary.mean_n_selected:.3g}, "
                f"failures {summary.failures}/{summary.n_trials}"
            )
        self.success(f"Summary written to {options['out']}")

    def _tabulate(self, summaries, with_scale):
        if not with_scale:
            summary = summaries[0]
            return summary.as_dict(), [trial.row(summary.n_channels) for trial in summary.trials]
        values = {'delta_scales': [summary.delta_scale for summary in summaries]}
        rows = []
        for summary in summaries:
            prefix = f"scale_{summary.delta_scale:g}."
            values.update({prefix + key: value for key, value in summary.as_dict().items()})
            rows.extend([summary.delta_scale] + trial.row(summary.n_channels) for trial in summary.trials)
        return values, rows
