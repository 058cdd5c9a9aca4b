from django.contrib import admin

from .models import ExperimentRun


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    """
    Registry rows are written by the experiment runner only.
    """
    list_display = [
        'run_uuid', 'method', 'preset', 'seed', 'status', 'final_tracking_fit',
        'average_model_fit', 'max_abs_input', 'max_theta_norm', 'created_at'
    ]
    list_filter = ['kind', 'method', 'preset', 'status', 'created_at']
    search_fields = ['preset', 'config_hash', 'output_dir']
    readonly_fields = [field.name for field in ExperimentRun._meta.fields]
    date_hierarchy = 'created_at'
    ordering = ['-created_at']

    def has_add_permission(self, request):
        return False

    def has_change_permission(self, request, obj=None):
        return False
