import logging
import shutil
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Optional

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

logger = logging.getLogger(__name__)

DATE_FORMAT = '%Y-%m-%d'


def parse_day(name: str) -> Optional[datetime]:
    try:
        return datetime.strptime(name, DATE_FORMAT)
    except ValueError:
        return None


class Command(BaseCommand):
    """
    Deletes daily event-log directories older than the retention window.
    failures.log and anything not named YYYY-MM-DD are left alone.
    """
    help = "Deletes daily run-event log directories older than the given number of days."

    def add_arguments(self, parser):
        parser.add_argument('days', type=int, help='Number of days of event logs to keep')
        parser.add_argument('--dry-run', action='store_true', help='List what would be deleted without deleting')

    def handle(self, *args, **options):
        days_to_keep = options['days']
        dry_run = options['dry_run']
        if days_to_keep < 1:
            raise CommandError('Number of days to keep must be at least 1.', returncode=2)

        logs_dir = Path(getattr(settings, 'LOGS_DIR', '') or '')
        if not str(logs_dir) or not logs_dir.is_dir():
            self.stdout.write(self.style.WARNING(f'Logs directory not found: {logs_dir}. Nothing to rotate.'))
            return

        cutoff = (datetime.now(timezone.utc) - timedelta(days=days_to_keep)).date()
        self.stdout.write(f"Keeping event logs from {cutoff.strftime(DATE_FORMAT)} onwards.")

        deleted, errors = 0, 0
        for item in sorted(logs_dir.iterdir()):
            day = parse_day(item.name) if item.is_dir() else None
            if day is None:
                logger.debug("Skipping %s", item.name)
                continue
            if day.date() >= cutoff:
                continue
            if dry_run:
                self.stdout.write(f"[DRY RUN] Would delete: {item.name}")
                deleted += 1
                continue
            try:
                shutil.rmtree(item)
            except OSError as e:
                self.stderr.write(self.style.ERROR(f"Error deleting {item.name}: {e}"))
                errors += 1
                continue
            self.stdout.write(f"Deleted: {item.name}")
            deleted += 1

        verb = 'Would delete' if dry_run else 'Deleted'
        summary = f"{verb} {deleted} director(y/ies). {errors} error(s)."
        self.stdout.write(self.style.ERROR(summary) if errors else self.style.SUCCESS(summary))
