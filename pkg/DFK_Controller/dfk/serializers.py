from rest_framework import serializers

from .models import PipelineRun
from .plant_services import NOISE_KINDS, SCHEDULING_MAPS, SchedulingMap
from .closed_loop_services import COMPANIONS, REFERENCE_KINDS

PLANT_KINDS = ('duffing', 'two_link', 'linear_lpv')
EXCITATION_KINDS = ('sinusoid', 'uniform', 'manipulator')
BASIS_FAMILIES = ('polynomial', 'gaussian')

PLANT_PARAMETERS = {
    'duffing': ('alpha1', 'alpha2', 'beta'),
    'two_link': ('l1', 'l2', 'M1', 'M2', 'g'),
    'linear_lpv': (),
}
STATE_DIMS = {'duffing': 2, 'two_link': 4}
INPUT_DIMS = {'duffing': 1, 'two_link': 2}

NO_NOISE = {'kind': 'none', 'level': 0.0}


class StrictSerializer(serializers.Serializer):
    """Serializer that rejects keys it does not declare"""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown key.'] for key in unknown})
        return super().to_internal_value(data)


def section_defaults(serializer_class):
    """Callable default that fills an omitted section with its field defaults"""
    def build():
        serializer = serializer_class(data={})
        serializer.is_valid(raise_exception=True)
        return dict(serializer.validated_data)
    return build


def _positive(value, name):
    if value is not None and value <= 0:
        raise serializers.ValidationError(f"{name} must be positive.")
    return value


def _box_field(**kwargs):
    return serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2),
        min_length=1, **kwargs
    )


def _matrix_list_field():
    return serializers.ListField(
        child=serializers.ListField(child=serializers.ListField(child=serializers.FloatField())),
        min_length=1,
    )


class NoiseSerializer(StrictSerializer):
    kind = serializers.ChoiceField(choices=NOISE_KINDS, default='none')
    level = serializers.FloatField(min_value=0.0, default=0.0)


class LpvMatricesSerializer(StrictSerializer):
    """Affine terms (M0, M1, ..., M_np) of A(p), B(p) and H(p) plus domain boxes"""
    A_terms = _matrix_list_field()
    B_terms = _matrix_list_field()
    H_terms = _matrix_list_field()
    p_box = _box_field()
    x_box = _box_field()
    e_box = _box_field()

    def validate(self, attrs):
        n_x = len(attrs['A_terms'][0])
        for name in ('A_terms', 'B_terms', 'H_terms'):
            for matrix in attrs[name]:
                if len(matrix) != n_x or len({len(row) for row in matrix}) != 1:
                    raise serializers.ValidationError({name: f"Every term needs {n_x} rows of equal length."})
        if any(len(row) != n_x for row in attrs['A_terms'][0]):
            raise serializers.ValidationError({'A_terms': 'A must be square.'})
        if len(attrs['p_box']) != n_x or len(attrs['x_box']) != n_x:
            raise serializers.ValidationError({'p_box': 'The system schedules on its state; p and x boxes need n_x rows.'})
        if len(attrs['e_box']) != len(attrs['H_terms'][0][0]):
            raise serializers.ValidationError({'e_box': 'One e interval per H column.'})
        for name in ('A_terms', 'B_terms', 'H_terms'):
            if len(attrs[name]) > n_x + 1:
                raise serializers.ValidationError({name: 'At most one affine term per scheduling coordinate.'})
        return attrs


class PlantSerializer(StrictSerializer):
    kind = serializers.ChoiceField(choices=PLANT_KINDS)
    parameters = serializers.DictField(child=serializers.FloatField(), default=dict)
    lpv = LpvMatricesSerializer(required=False)

    def validate(self, attrs):
        allowed = PLANT_PARAMETERS[attrs['kind']]
        unknown = sorted(set(attrs['parameters']) - set(allowed))
        if unknown:
            raise serializers.ValidationError({'parameters': f"Unknown parameters for {attrs['kind']}: {unknown}"})
        if attrs['kind'] == 'linear_lpv' and 'lpv' not in attrs:
            raise serializers.ValidationError({'lpv': 'linear_lpv plants need their matrices.'})
        if attrs['kind'] != 'linear_lpv' and 'lpv' in attrs:
            raise serializers.ValidationError({'lpv': 'Only linear_lpv plants take matrices.'})
        return attrs


class ExcitationSerializer(StrictSerializer):
    kind = serializers.ChoiceField(choices=EXCITATION_KINDS)
    amplitudes = serializers.ListField(child=serializers.FloatField(), required=False)
    frequencies = serializers.ListField(child=serializers.FloatField(), required=False)
    noise_std = serializers.FloatField(min_value=0.0, default=0.0)
    amplitude = serializers.FloatField(min_value=0.0, default=1.0)
    tones = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2),
        required=False,
    )
    threshold = serializers.FloatField(min_value=0.0, required=False)
    feedback_gain = serializers.FloatField(required=False)
    quiet_starts = serializers.ListField(child=serializers.IntegerField(min_value=0), required=False)
    quiet_length = serializers.IntegerField(min_value=0, required=False)

    def validate(self, attrs):
        if attrs['kind'] == 'sinusoid':
            amplitudes, frequencies = attrs.get('amplitudes'), attrs.get('frequencies')
            if not amplitudes or frequencies is None or len(amplitudes) != len(frequencies):
                raise serializers.ValidationError('Sinusoid excitation needs one frequency per amplitude.')
        return attrs


class AcquisitionSerializer(StrictSerializer):
    L = serializers.IntegerField(min_value=2)
    Ts = serializers.FloatField()
    substeps = serializers.IntegerField(min_value=1, required=False)
    scheduling = serializers.ChoiceField(choices=SCHEDULING_MAPS, default='identity')
    state_noise = NoiseSerializer(default=NO_NOISE)
    input_noise = NoiseSerializer(default=NO_NOISE)

    def validate_Ts(self, value):
        return _positive(value, 'Ts')


class ValidationRunSerializer(StrictSerializer):
    L = serializers.IntegerField(min_value=2, required=False)
    excitation = ExcitationSerializer()


class BasisSerializer(StrictSerializer):
    family = serializers.ChoiceField(choices=BASIS_FAMILIES, default='polynomial')
    degree = serializers.IntegerField(min_value=0, default=1)
    centers = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()), required=False)
    widths = serializers.ListField(child=serializers.FloatField(), required=False)
    include_constant = serializers.BooleanField(default=False)

    def validate(self, attrs):
        if attrs['family'] == 'gaussian':
            centers, widths = attrs.get('centers'), attrs.get('widths')
            if not centers or not widths:
                raise serializers.ValidationError('Gaussian bases need centers and widths.')
            if len(widths) not in (1, len(centers)) or min(widths) <= 0:
                raise serializers.ValidationError({'widths': 'One positive width, or one per center.'})
        return attrs


class EstimationSerializer(StrictSerializer):
    """Prior overrides; anything left null is estimated from the data"""
    delta = serializers.FloatField(min_value=0.0, required=False, allow_null=True, default=None)
    gamma = serializers.FloatField(min_value=0.0, required=False, allow_null=True, default=None)
    lambda_S = serializers.FloatField(required=False, allow_null=True, default=None)
    lambda_B = serializers.FloatField(min_value=0.0, required=False, allow_null=True, default=None)
    lambda2_s = serializers.FloatField(required=False, allow_null=True, default=None)
    inflation = serializers.FloatField(required=False)
    knee_tolerance = serializers.FloatField(min_value=0.0, required=False)
    safety_margin = serializers.FloatField(required=False)
    lambda_b_radius = serializers.FloatField(required=False)
    gamma_grid = serializers.ListField(child=serializers.FloatField(min_value=0.0), required=False, min_length=1)
    delta_scale = serializers.FloatField(default=1.0)
    allow_missing_lambda_B = serializers.BooleanField(default=False)

    def validate_lambda_S(self, value):
        return _positive(value, 'lambda_S')

    def validate_lambda2_s(self, value):
        return _positive(value, 'lambda2_s')

    def validate_lambda_b_radius(self, value):
        return _positive(value, 'lambda_b_radius')

    def validate_delta_scale(self, value):
        return _positive(value, 'delta_scale')

    def validate_inflation(self, value):
        if value <= 1:
            raise serializers.ValidationError('inflation must exceed 1.')
        return value

    def validate_safety_margin(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError('safety_margin must lie in (0, 1).')
        return value


class DesignOptionsSerializer(StrictSerializer):
    max_pairs = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    sparsity_threshold = serializers.FloatField(required=False)
    lp_tolerance = serializers.FloatField(required=False)
    lp_max_iters = serializers.IntegerField(min_value=1, required=False)

    def validate_sparsity_threshold(self, value):
        return _positive(value, 'sparsity_threshold')

    def validate_lp_tolerance(self, value):
        return _positive(value, 'lp_tolerance')


class ReferenceSerializer(StrictSerializer):
    kind = serializers.ChoiceField(choices=REFERENCE_KINDS, default='filtered-uniform')
    amplitude = serializers.FloatField(min_value=0.0, default=5.0)
    cutoff = serializers.FloatField(default=1.0)
    companion = serializers.ChoiceField(choices=COMPANIONS, default='derivative')
    dwell = serializers.FloatField(default=10.0)
    channel_gains = serializers.ListField(child=serializers.FloatField(), min_length=1, default=[1.0])

    def validate_cutoff(self, value):
        return _positive(value, 'cutoff')

    def validate_dwell(self, value):
        return _positive(value, 'dwell')


class SimulationSerializer(StrictSerializer):
    T = serializers.IntegerField(min_value=1)
    reference = ReferenceSerializer(default=section_defaults(ReferenceSerializer))
    noise = NoiseSerializer(default=NO_NOISE)
    divergence_limit = serializers.FloatField(required=False)


class MonteCarloSerializer(StrictSerializer):
    n_trials = serializers.IntegerField(min_value=1, default=1)
    workers = serializers.IntegerField(min_value=1, required=False)
    delta_scales = serializers.ListField(child=serializers.FloatField(), required=False)


class PipelineConfigSerializer(StrictSerializer):
    """Full experiment description: plant through Monte Carlo"""
    name = serializers.CharField(max_length=100)
    seed = serializers.IntegerField(min_value=0, default=0)
    plant = PlantSerializer()
    excitation = ExcitationSerializer()
    acquisition = AcquisitionSerializer()
    validation = ValidationRunSerializer(required=False)
    basis = BasisSerializer(default=section_defaults(BasisSerializer))
    estimation = EstimationSerializer(default=section_defaults(EstimationSerializer))
    design = DesignOptionsSerializer(default=section_defaults(DesignOptionsSerializer))
    simulation = SimulationSerializer(required=False)
    montecarlo = MonteCarloSerializer(default=section_defaults(MonteCarloSerializer))

    def validate(self, attrs):
        plant = attrs['plant']
        scheduling = SchedulingMap(attrs['acquisition']['scheduling'])
        if plant['kind'] == 'linear_lpv':
            if scheduling.name != 'identity':
                raise serializers.ValidationError({'acquisition': 'linear_lpv plants schedule on their own state.'})
            n_x = len(plant['lpv']['A_terms'][0])
            n_u = len(plant['lpv']['B_terms'][0][0])
            n_p = n_x
        else:
            state_dim = STATE_DIMS[plant['kind']]
            n_u = INPUT_DIMS[plant['kind']]
            n_x = scheduling.regressor_dim(state_dim)
            n_p = scheduling.feature_dim(state_dim)

        excitation = attrs['excitation']
        if excitation['kind'] == 'manipulator' and plant['kind'] != 'two_link':
            raise serializers.ValidationError({'excitation': 'The manipulator excitation drives the two-link arm only.'})
        if excitation['kind'] == 'sinusoid' and n_u != 1:
            raise serializers.ValidationError({'excitation': 'Sinusoid excitation drives single-input plants only.'})

        basis = attrs.get('basis', {})
        if basis.get('family') == 'gaussian' and any(len(c) != n_p for c in basis['centers']):
            raise serializers.ValidationError({'basis': f"Gaussian centers need {n_p} coordinates."})

        simulation = attrs.get('simulation')
        if simulation is not None:
            reference = simulation.get('reference') or {}
            gains = reference.get('channel_gains', [1.0])
            companion = reference.get('companion', 'derivative')
            channels = len(gains) * (1 if companion == 'none' else 2)
            if channels != n_x:
                raise serializers.ValidationError(
                    {'simulation': f"Reference has {channels} channels, the feedback regressor has {n_x}."}
                )
        return attrs


class PipelineRunSerializer(serializers.ModelSerializer):
    """Serializer for PipelineRun model"""
    command_display = serializers.CharField(source='get_command_display', read_only=True)
    duration = serializers.SerializerMethodField()

    class Meta:
        model = PipelineRun
        fields = [
            'id', 'command', 'command_display', 'config_path', 'config_snapshot',
            'output_path', 'status', 'metrics', 'error_message',
            'started_at', 'finished_at', 'duration'
        ]
        read_only_fields = fields

    def get_duration(self, obj):
        return obj.duration
