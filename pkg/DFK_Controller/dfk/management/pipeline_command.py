"""
Shared plumbing for the pipeline management commands.

Failures leave through CommandError with a return code per failure class:

    2  invalid config, arguments or data
    3  infeasible design program
    4  divergence (acquisition or closed loop)
    5  file I/O or artifact format
"""

import logging

from django.core.management.base import BaseCommand, CommandError

from dfk.exceptions import DatasetFormatError, DivergenceError, EstimationError, InfeasibleDesignError
from dfk.pipeline_services import ConfigError

logger = logging.getLogger(__name__)

EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_DIVERGENCE = 4
EXIT_IO = 5


def sidecar(path, suffix: str) -> str:
    return f"{path}.{suffix}"


class PipelineCommand(BaseCommand):
    """BaseCommand that maps pipeline exceptions to exit codes."""

    def add_config_argument(self, parser, required=True):
        parser.add_argument(
            '--config',
            type=str,
            required=required,
            help='Experiment config (JSON); bare names are looked up in the bundled configs',
        )

    def add_seed_argument(self, parser):
        parser.add_argument(
            '--seed',
            type=int,
            help='Override the config seed',
        )

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except CommandError:
            raise
        except (ConfigError, EstimationError, ValueError) as e:
            raise CommandError(str(e), returncode=EXIT_VALIDATION)
        except InfeasibleDesignError as e:
            raise CommandError(str(e), returncode=EXIT_INFEASIBLE)
        except DivergenceError as e:
            raise CommandError(f"Unstable: {e}", returncode=EXIT_DIVERGENCE)
        except (DatasetFormatError, OSError) as e:
            raise CommandError(str(e), returncode=EXIT_IO)

    def success(self, message: str):
        self.stdout.write(self.style.SUCCESS(message))
