import logging
from pathlib import Path

from rest_framework import status, viewsets
from rest_framework.decorators import action
from rest_framework.response import Response

from backend.exceptions import ConfigurationError
from .models import ExperimentRun
from .persistence import read_json
from .serializers import ExperimentRunSerializer

logger = logging.getLogger(__name__)


class ExperimentRunViewSet(viewsets.ReadOnlyModelViewSet):
    """
    Read-only registry of finished runs.

    Filter with ?method=KRILC&preset=sec51&status=completed. Runs are started
    from the command line only.
    """
    queryset = ExperimentRun.objects.all()
    serializer_class = ExperimentRunSerializer
    lookup_field = 'run_uuid'
    filterset_fields = ['kind', 'method', 'preset', 'status', 'seed']

    @action(detail=True, methods=['get'], url_path='fits')
    def fits(self, request, run_uuid=None):
        """Per-iteration fit series from the run's record.json."""
        run = self.get_object()
        if not run.output_dir:
            return Response({'error': 'This run has no output directory'}, status=status.HTTP_404_NOT_FOUND)

        try:
            record = read_json(Path(run.output_dir) / 'record.json')
        except ConfigurationError as e:
            logger.warning(f"Fits for run {run.run_uuid} unavailable: {str(e)}")
            return Response({'error': 'Run artefacts are not available'}, status=status.HTTP_404_NOT_FOUND)

        return Response({
            'run_uuid': str(run.run_uuid),
            'method': run.method,
            'tracking_fits': record.get('tracking_fits', []),
            'fit_iterations': record.get('fit_iterations', []),
            'average_model_fits': record.get('average_model_fits', {}),
        })
