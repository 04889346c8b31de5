from django.contrib import admin
from .models import PipelineRun


@admin.register(PipelineRun)
class PipelineRunAdmin(admin.ModelAdmin):
    list_display = ['command', 'status', 'config_path', 'output_path', 'started_at', 'finished_at']
    list_filter = ['command', 'status', 'started_at']
    search_fields = ['config_path', 'output_path', 'error_message']
    readonly_fields = ['id', 'started_at', 'finished_at']
    date_hierarchy = 'started_at'

    fieldsets = (
        ('Invocation', {
            'fields': ('command', 'status', 'config_path', 'output_path')
        }),
        ('Results', {
            'fields': ('metrics', 'error_message')
        }),
        ('Config', {
            'fields': ('config_snapshot',),
            'classes': ('collapse',)
        }),
        ('Metadata', {
            'fields': ('id', 'started_at', 'finished_at'),
            'classes': ('collapse',)
        })
    )
