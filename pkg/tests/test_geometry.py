import math

import numpy as np
import pytest

from nrtrack.geometry import (
    DeploymentConfig,
    GeometryError,
    ProfileError,
    RRHSite,
    TrackProfile,
    deploy_rrhs,
    kinematics_at,
    los_geometry,
    paper_scale_profile,
    select_serving_rrhs,
)


def make_site(sid=0, x=0.0, y=15.0, pss=0, sss=0):
    return RRHSite(id=sid, position=(x, y), pss_id=pss, sss_id=sss)


class TestKinematics:
    def test_constant_acceleration(self):
        profile = TrackProfile(segments=((10.0, 1.0),))
        k = kinematics_at(profile, 10.0)
        assert k.position == pytest.approx((50.0, 0.0))
        assert k.velocity == pytest.approx((10.0, 0.0))

    def test_uniform_motion(self):
        profile = TrackProfile(segments=((10.0, 0.0),), initial_velocity=111.11)
        k = kinematics_at(profile, 5.0)
        assert k.x == pytest.approx(555.55)
        assert k.velocity[0] == pytest.approx(111.11)

    def test_y_components_zero(self):
        profile = TrackProfile(segments=((5.0, 0.5),), initial_velocity=3.0)
        k = kinematics_at(profile, 2.5)
        assert k.position[1] == 0.0
        assert k.velocity[1] == 0.0
        assert k.acceleration[1] == 0.0

    def test_out_of_range_names_interval(self):
        profile = TrackProfile(segments=((10.0, 0.0),), initial_velocity=1.0)
        with pytest.raises(ProfileError, match=r"\[0, 10"):
            kinematics_at(profile, 11.0)
        with pytest.raises(ProfileError):
            kinematics_at(profile, -0.5)

    def test_multi_segment_continuity(self):
        profile = TrackProfile(segments=((4.0, 2.0), (6.0, 0.0), (4.0, -2.0)))
        # position/velocity continuous at the segment boundary
        before = kinematics_at(profile, 4.0 - 1e-9)
        after = kinematics_at(profile, 4.0 + 1e-9)
        assert before.x == pytest.approx(after.x, abs=1e-6)
        assert before.velocity[0] == pytest.approx(after.velocity[0], abs=1e-6)

    def test_velocity_never_negative_rejected(self):
        with pytest.raises(ProfileError, match="negative"):
            TrackProfile(segments=((10.0, -1.0),), initial_velocity=5.0)

    def test_velocity_cap_rejected(self):
        with pytest.raises(ProfileError, match="exceeds"):
            TrackProfile(segments=((200.0, 1.0),), initial_velocity=0.0)

    def test_nonpositive_duration_rejected(self):
        with pytest.raises(ProfileError, match="duration"):
            TrackProfile(segments=((0.0, 1.0),))

    def test_paper_scale_profile_reaches_400kmh_over_43km(self):
        profile = paper_scale_profile()
        times = np.linspace(0.0, profile.total_duration, 600)
        xs = np.array([kinematics_at(profile, t).x for t in times])
        vs = np.array([kinematics_at(profile, t).velocity[0] for t in times])
        assert np.all(np.diff(xs) >= 0), "x(t) must be monotone"
        assert vs.max() >= 0.99 * (400.0 / 3.6)
        assert xs[-1] > 43_000.0

    def test_derivative_matches_velocity(self):
        # spec invariant: finite-difference position derivative equals velocity
        profile = TrackProfile(segments=((4.0, 2.0), (6.0, 0.0), (4.0, -2.0)))
        dt = 1e-4
        rng = np.random.default_rng(7)
        for t in rng.uniform(dt, profile.total_duration - dt, size=50):
            xp = kinematics_at(profile, t + dt).x
            xm = kinematics_at(profile, t - dt).x
            v = kinematics_at(profile, t).velocity[0]
            assert (xp - xm) / (2 * dt) == pytest.approx(v, rel=1e-6, abs=1e-6)


class TestDeployment:
    def test_regular_spacing(self):
        sites = deploy_rrhs(DeploymentConfig(track_length=1500.0, rrh_spacing=500.0))
        assert [s.position[0] for s in sites] == [0.0, 500.0, 1000.0, 1500.0]
        assert all(s.position[1] == 15.0 for s in sites)

    def test_adjacent_pss_differ(self):
        sites = deploy_rrhs(DeploymentConfig(track_length=5000.0))
        for a, b in zip(sites, sites[1:]):
            assert a.pss_id != b.pss_id
        assert [s.pss_id for s in sites[:4]] == [0, 1, 2, 0]

    def test_identity_pairs_unique_in_window(self):
        sites = deploy_rrhs(DeploymentConfig(track_length=100_000.0))
        window = sites[:336]
        assert len({s.identity for s in window}) == len(window)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DeploymentConfig(track_length=100.0, rrh_spacing=500.0)
        with pytest.raises(ValueError):
            DeploymentConfig(track_length=1000.0, rrh_spacing=-1.0)
        with pytest.raises(ValueError):
            DeploymentConfig(track_length=1000.0, rrh_offset_y=0.0)


class TestLosGeometry:
    def test_symmetric_right_triangle(self):
        d, aod, _ = los_geometry((15.0, 0.0), make_site())
        assert d == pytest.approx(15.0 * math.sqrt(2.0))
        assert math.degrees(aod) == pytest.approx(-45.0)

    def test_broadside(self):
        d, aod, _ = los_geometry((0.0, 0.0), make_site())
        assert d == pytest.approx(15.0)
        assert math.degrees(aod) == pytest.approx(-90.0)

    def test_mirror(self):
        _, aod, _ = los_geometry((-15.0, 0.0), make_site())
        assert math.degrees(aod) == pytest.approx(-135.0)

    def test_distance_symmetric_and_aod_range(self):
        rng = np.random.default_rng(3)
        site = make_site()
        for _ in range(200):
            x = rng.uniform(-2000.0, 2000.0)
            d1, aod, aoa = los_geometry((x, 0.0), site)
            d2 = math.hypot(x - site.position[0], 0.0 - site.position[1])
            assert d1 == pytest.approx(d2)
            assert -math.pi < aod < 0.0  # train below the site
            assert abs(aoa) <= math.pi / 2.0 + 1e-12

    def test_coincident_raises(self):
        with pytest.raises(GeometryError):
            los_geometry((0.0, 15.0), make_site())


class TestServingSelection:
    def make_sites(self, xs):
        return [make_site(sid=i, x=x, pss=i % 3, sss=i % 336) for i, x in enumerate(xs)]

    def test_nearest_three_dominate(self):
        sites = self.make_sites([0.0, 500.0, 1000.0, 1500.0])
        chosen = select_serving_rrhs((250.0, 0.0), sites, 3)
        assert {s.position[0] for s in chosen} == {0.0, 500.0, 1000.0}

    def test_power_ranking_at_site(self):
        # frozen oracle: received power ranking with the implemented path loss
        # at x=0 decays monotonically with distance, so the three nearest win
        sites = self.make_sites([0.0, 500.0, 1000.0, 1500.0])
        chosen = select_serving_rrhs((0.0, 0.0), sites, 3)
        assert [s.position[0] for s in chosen] == [0.0, 500.0, 1000.0]

    def test_clamps_to_available(self):
        sites = self.make_sites([0.0, 500.0])
        chosen = select_serving_rrhs((100.0, 0.0), sites, 3)
        assert len(chosen) == 2

    def test_invariant_to_input_order(self):
        sites = self.make_sites([0.0, 500.0, 1000.0, 1500.0, 2000.0])
        ref = select_serving_rrhs((700.0, 0.0), sites, 3)
        perm = select_serving_rrhs((700.0, 0.0), sites[::-1], 3)
        assert [s.id for s in ref] == [s.id for s in perm]

    def test_tie_breaks_on_lower_id(self):
        sites = self.make_sites([0.0, 500.0])
        chosen = select_serving_rrhs((250.0, 0.0), sites, 1)
        assert chosen[0].id == 0
