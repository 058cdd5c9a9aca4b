from django.contrib import admin
from django.urls import path, include

urlpatterns = [
    path('admin/', admin.site.urls),
    path('api/experiments/', include('experiments.urls')),  # Read-only run registry
]
