from rest_framework import serializers

from identification.kernels import KernelFamily
from plant.references import REFERENCES
from .config import ExperimentConfig
from .models import ExperimentRun

DEFAULTS = ExperimentConfig()
FAMILIES = [family.value for family in KernelFamily]


class ExperimentConfigSerializer(serializers.Serializer):
    """Validates a raw experiment mapping; `build()` returns the ExperimentConfig."""

    kind = serializers.ChoiceField(choices=ExperimentConfig.KINDS, default=DEFAULTS.kind)
    method = serializers.ChoiceField(choices=ExperimentConfig.METHODS, default=DEFAULTS.method)
    label = serializers.CharField(max_length=100, allow_blank=True, default='')
    seed = serializers.IntegerField(min_value=0, default=DEFAULTS.seed)

    plant = serializers.ChoiceField(choices=ExperimentConfig.PLANTS, default=DEFAULTS.plant)
    plant_seed = serializers.IntegerField(min_value=0, default=DEFAULTS.plant_seed)
    plant_file = serializers.CharField(allow_null=True, required=False, default=None)
    plant_order = serializers.IntegerField(min_value=1, default=DEFAULTS.plant_order)
    plant_radius = serializers.FloatField(default=DEFAULTS.plant_radius)
    plant_filter = serializers.BooleanField(default=DEFAULTS.plant_filter)
    reference = serializers.ChoiceField(choices=sorted(REFERENCES), default=DEFAULTS.reference)

    N_e = serializers.IntegerField(min_value=1, default=DEFAULTS.N_e)
    N_d = serializers.IntegerField(min_value=1, default=DEFAULTS.N_d)
    n_a = serializers.IntegerField(min_value=1, default=DEFAULTS.n_a)
    n_b = serializers.IntegerField(min_value=1, default=DEFAULTS.n_b)
    n_c = serializers.IntegerField(min_value=1, default=DEFAULTS.n_c)
    d_u = serializers.FloatField(default=DEFAULTS.d_u)
    d_c = serializers.FloatField(min_value=0.0, default=DEFAULTS.d_c)
    sigma2 = serializers.FloatField(min_value=0.0, default=DEFAULTS.sigma2)
    d_v = serializers.FloatField(allow_null=True, required=False, default=DEFAULTS.d_v)

    family_b = serializers.ChoiceField(choices=FAMILIES, default=DEFAULTS.family_b)
    family_a = serializers.ChoiceField(choices=FAMILIES, default=DEFAULTS.family_a)
    family_c = serializers.ChoiceField(choices=FAMILIES, default=DEFAULTS.family_c)
    model_starts = serializers.IntegerField(min_value=1, default=DEFAULTS.model_starts)
    model_evaluations = serializers.IntegerField(min_value=1, default=DEFAULTS.model_evaluations)
    controller_starts = serializers.IntegerField(min_value=1, default=DEFAULTS.controller_starts)
    controller_evaluations = serializers.IntegerField(min_value=1, default=DEFAULTS.controller_evaluations)

    initial = serializers.ChoiceField(choices=ExperimentConfig.INITIAL_MODES, default=DEFAULTS.initial)
    initial_iterations = serializers.IntegerField(min_value=1, default=DEFAULTS.initial_iterations)
    l_theta = serializers.IntegerField(min_value=1, default=DEFAULTS.l_theta)
    eta_theta = serializers.FloatField(default=DEFAULTS.eta_theta)
    mu_theta = serializers.FloatField(default=DEFAULTS.mu_theta)
    eta_psi = serializers.FloatField(default=DEFAULTS.eta_psi)
    mu_psi = serializers.FloatField(default=DEFAULTS.mu_psi)
    gamma = serializers.FloatField(default=DEFAULTS.gamma)

    input_variance = serializers.FloatField(min_value=0.0, default=DEFAULTS.input_variance)
    estimators = serializers.ListField(
        child=serializers.ChoiceField(choices=ExperimentConfig.ESTIMATORS),
        allow_empty=False,
        default=list(DEFAULTS.estimators),
    )
    checkpoint_every = serializers.IntegerField(min_value=1, default=DEFAULTS.checkpoint_every)

    parallelism = serializers.IntegerField(min_value=1, allow_null=True, default=None)

    def validate_d_u(self, value):
        if value <= 0:
            raise serializers.ValidationError("Input bound d_u must be positive.")
        return value

    def validate_d_v(self, value):
        if value is not None and value <= 0:
            raise serializers.ValidationError("Noise bound d_v must be positive or null for unbounded noise.")
        return value

    def validate_plant_radius(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError("Plant root radius must lie in (0, 1).")
        return value

    def validate_gamma(self, value):
        if value <= 0:
            raise serializers.ValidationError("Inversion gate gamma must be positive.")
        return value

    def validate_eta_theta(self, value):
        return self._step_size(value)

    def validate_eta_psi(self, value):
        return self._step_size(value)

    def validate_mu_theta(self, value):
        return self._positive(value)

    def validate_mu_psi(self, value):
        return self._positive(value)

    def _step_size(self, value):
        if not 0 < value <= 1:
            raise serializers.ValidationError("Step sizes must lie in (0, 1].")
        return value

    def _positive(self, value):
        if value <= 0:
            raise serializers.ValidationError("Must be positive.")
        return value

    def validate(self, attrs):
        unknown = set(self.initial_data) - set(self.fields)
        if unknown:
            raise serializers.ValidationError({key: "Unknown config key." for key in sorted(unknown)})

        if attrs['plant'] == 'file' and not attrs.get('plant_file'):
            raise serializers.ValidationError({'plant_file': "A plant file is required when plant is 'file'."})
        if attrs['kind'] == 'identification' and attrs['input_variance'] <= 0:
            raise serializers.ValidationError({'input_variance': "Identification needs a persistently exciting input."})
        return attrs

    def build(self):
        data = dict(self.validated_data)
        data['estimators'] = tuple(data['estimators'])
        return ExperimentConfig(**data)


class ExperimentRunSerializer(serializers.ModelSerializer):
    class Meta:
        model = ExperimentRun
        fields = '__all__'
        read_only_fields = [f.name for f in ExperimentRun._meta.fields]
