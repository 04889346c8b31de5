"""
Print recorded pipeline runs and the published reference results.

Usage:
    python manage.py report
    python manage.py report --run <uuid>
    python manage.py report --stage montecarlo --limit 3 --references
"""

import json

from django.core.exceptions import ValidationError

from dfk.closed_loop_services import REFERENCE_RESULTS
from dfk.management.pipeline_command import PipelineCommand
from dfk.models import PipelineRun


class Command(PipelineCommand):
    help = 'Show recorded pipeline runs'

    def add_arguments(self, parser):
        parser.add_argument('--run', type=str, help='Show one run by id')
        parser.add_argument('--stage', type=str, choices=[c for c, _ in PipelineRun.COMMANDS],
                            help='Only runs of this command')
        parser.add_argument('--limit', type=int, default=5, help='Number of latest runs to list')
        parser.add_argument('--references', action='store_true', help='Also print the published results')

    def handle(self, *args, **options):
        if options['run']:
            try:
                runs = [PipelineRun.objects.get(pk=options['run'])]
            except (PipelineRun.DoesNotExist, ValidationError):
                raise ValueError(f"No recorded run {options['run']}")
        else:
            runs = PipelineRun.objects.all()
            if options['stage']:
                runs = runs.filter(command=options['stage'])
            runs = list(runs[:options['limit']])

        if not runs:
            self.stdout.write('No recorded runs.')
        for run in runs:
            self._show(run, detailed=bool(options['run']))

        if options['references']:
            self.stdout.write('Published reference results:')
            self.stdout.write(json.dumps(REFERENCE_RESULTS, indent=2))

    def _show(self, run, detailed):
        self.stdout.write(f"{run.id}  {run.command:<10} {run.status:<9} {run.started_at:%Y-%m-%d %H:%M:%S}  "
                          f"{run.output_path}")
        if run.error_message:
            self.stdout.write(self.style.ERROR(f"  {run.error_message}"))
        metrics = run.metrics if detailed else {k: v for k, v in run.metrics.items() if not isinstance(v, (list, dict))}
        for key, value in metrics.items():
            self.stdout.write(f"  {key} = {json.dumps(value)}")
