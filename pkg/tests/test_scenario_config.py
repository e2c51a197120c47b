"""场景 TOML 解析与校验"""
import copy
import re

import pytest

import settings
from pv_errors import ConfigError
from pv_model import Drive
from scenario_config import load_scenario, parse_scenario

BASE_DOC = {
    'scenario': {'id': 'tiny'},
    'panel': {'iph_ref': 10.4, 'i0_ref': 2.4416e-11, 'ideality': 1.02, 'rs': 0.3719, 'rsh_ref': 807.2},
    'array': {'m_p': 2, 'n_p': 2},
}


def make_doc(**sections):
    doc = copy.deepcopy(BASE_DOC)
    doc.update(sections)
    return doc


class TestShippedScenarios:

    def test_psc(self, psc_config):
        assert psc_config.scenario_id == 'psc'
        assert psc_config.env_map.shape == (10, 3)
        assert psc_config.env_map.g[0, 0] == 400.0
        assert psc_config.env_map.g[1, 1] == 600.0
        assert psc_config.env_map.g[5, 2] == 1000.0
        assert psc_config.drive == Drive.impedance(15.0)
        assert psc_config.reference['err_p'] == pytest.approx(17.2)
        assert re.fullmatch(r'[0-9a-f]{64}', psc_config.sha256)
        assert psc_config.out_dir == settings.PROJECT_ROOT / 'data' / 'results' / 'psc'

    def test_hotspot_temperatures(self, hotspot_config):
        t = hotspot_config.env_map.t
        assert t[0, 0] == 348.0
        assert t[1, 1] == 328.0
        assert t[3, 0] == 298.0
        assert t[3, 1] == 288.0
        assert (hotspot_config.env_map.g == 1000.0).all()

    def test_uniform_sweep_range(self, uniform_config):
        assert uniform_config.z_min == 0.5
        assert uniform_config.z_max == 1.0e4
        assert uniform_config.n_points == 500
        assert uniform_config.reference == {}


class TestParse:

    def test_defaults(self):
        config = parse_scenario(make_doc())
        assert config.drive == Drive.voltage(0.0)
        assert config.bypass_enabled
        assert config.bypass is not None
        assert config.block_diodes
        assert config.formats == ('csv', 'json')
        assert config.n_points == settings.DEFAULT_N_POINTS

    def test_override_is_one_based(self):
        config = parse_scenario(make_doc(env={'g': 1000.0, 't': 298.0,
                                              'override': [{'row': 1, 'col': 2, 'g': 300.0}]}))
        assert config.env_map.g[0, 1] == 300.0
        assert config.env_map.g[0, 0] == 1000.0
        assert config.env_map.t[0, 1] == 298.0

    def test_cell_section(self):
        doc = make_doc()
        del doc['panel']
        doc['cell'] = {'iph_ref': 10.4, 'i0_ref': 2.4416e-11, 'ideality': 1.02, 'rs': 0.005,
                       'rsh_ref': 11.0, 'm_c': 72, 'n_c': 1}
        panel = parse_scenario(doc).panel
        assert panel.m_c == 72
        assert panel.rs == pytest.approx(0.36)
        assert panel.rsh_ref == pytest.approx(792.0)

    def test_bypass_disabled(self):
        config = parse_scenario(make_doc(bypass={'enabled': False}))
        assert config.bypass is None
        assert config.build_model().bypass is None

    def test_relative_out_dir(self, tmp_path):
        config = parse_scenario(make_doc(outputs={'dir': 'out'}), base_dir=tmp_path)
        assert config.out_dir == tmp_path / 'out'


class TestRejects:

    @pytest.mark.parametrize('doc', [
        make_doc(env={'override': [{'row': 3, 'col': 1, 'g': 500.0}]}),
        make_doc(env={'override': [{'row': 0, 'col': 1, 'g': 500.0}]}),
        make_doc(env={'override': [{'col': 1, 'g': 500.0}]}),
        make_doc(drive={'voltage': 10.0, 'impedance': 5.0}),
        make_doc(drive={'impedance': -5.0}),
        make_doc(extra={'x': 1}),
        make_doc(panel={**BASE_DOC['panel'], 'rs': -0.1}),
        make_doc(panel={**BASE_DOC['panel'], 'colour': 'blue'}),
        make_doc(array={'m_p': 0, 'n_p': 2}),
        make_doc(array={'n_p': 2}),
        make_doc(sweep={'n_points': 1}),
        make_doc(outputs={'formats': ['xlsx']}),
        make_doc(scenario={'id': ''}),
    ], ids=['row-out-of-range', 'row-zero', 'missing-row', 'two-drives', 'negative-impedance',
            'unknown-section', 'negative-rs', 'unknown-field', 'empty-array', 'missing-m_p',
            'too-few-points', 'unknown-format', 'empty-id'])
    def test_invalid_documents(self, doc):
        with pytest.raises(ConfigError):
            parse_scenario(doc)

    def test_missing_panel(self):
        doc = make_doc()
        del doc['panel']
        with pytest.raises(ConfigError):
            parse_scenario(doc)

    def test_malformed_toml(self, tmp_path):
        path = tmp_path / 'bad.toml'
        path.write_text('[scenario\nid = "bad"\n', encoding='utf-8')
        with pytest.raises(ConfigError):
            load_scenario(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_scenario(tmp_path / 'nope.toml')


class TestLoad:

    def test_sha256_tracks_content(self, tmp_path):
        text = (settings.SCENARIOS_DIR / 'uniform.toml').read_text(encoding='utf-8')
        a, b = tmp_path / 'a.toml', tmp_path / 'b.toml'
        a.write_text(text, encoding='utf-8')
        b.write_text(text + '\n# changed\n', encoding='utf-8')
        assert load_scenario(a).sha256 != load_scenario(b).sha256
        assert load_scenario(a).sha256 == load_scenario(settings.SCENARIOS_DIR / 'uniform.toml').sha256
