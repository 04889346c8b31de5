from rest_framework import viewsets
from rest_framework.permissions import AllowAny

from .models import PipelineRun
from .serializers import PipelineRunSerializer


class PipelineRunViewSet(viewsets.ReadOnlyModelViewSet):
    """Recorded pipeline runs; nothing is executed through the API"""
    queryset = PipelineRun.objects.all()
    serializer_class = PipelineRunSerializer
    permission_classes = [AllowAny]

    def get_queryset(self):
        queryset = PipelineRun.objects.all()
        command = self.request.query_params.get('command', None)
        status = self.request.query_params.get('status', None)

        if command:
            queryset = queryset.filter(command=command)
        if status:
            queryset = queryset.filter(status=status)

        return queryset
