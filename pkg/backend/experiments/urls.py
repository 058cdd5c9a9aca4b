from rest_framework import routers

from .views import ExperimentRunViewSet

app_name = 'experiments'

router = routers.DefaultRouter()
router.register(r'runs', ExperimentRunViewSet, basename='run')

urlpatterns = router.urls
