#include "handfit/camera.hpp"

#include "doctest.h"

#include <random>

using namespace handfit;

TEST_CASE("projection hits the principal point on the optical axis") {
  CameraIntrinsics cam{500, 500, 320, 240, 640, 480};
  const Vec2 uv = project(cam, {0, 0, 1});
  CHECK(uv.x() == doctest::Approx(320).epsilon(1e-12));
  CHECK(uv.y() == doctest::Approx(240).epsilon(1e-12));
}

TEST_CASE("projection of a lateral offset") {
  CameraIntrinsics cam{500, 500, 320, 240, 640, 480};
  const Vec2 uv = project(cam, {0.1, 0, 1});
  CHECK(uv.x() == doctest::Approx(370).epsilon(1e-12));  // 500 * 0.1 / 1 + 320
  CHECK(uv.y() == doctest::Approx(240).epsilon(1e-12));
}

TEST_CASE("points behind the camera are rejected") {
  CameraIntrinsics cam{500, 500, 320, 240, 640, 480};
  CHECK_THROWS_AS(project(cam, {0, 0, -1}), BehindCameraError);
  CHECK_THROWS_AS(project(cam, {0, 0, 0}), BehindCameraError);
}

TEST_CASE("z extraction and translation equivariance") {
  CHECK(z_of({1, 2, 3}) == 3);
  const Vec3 p{0.2, -0.4, 1.7}, t{0.3, 0.1, -0.2};
  CHECK(z_of(p + t) == doctest::Approx(z_of(p) + t.z()).epsilon(1e-15));
}

TEST_CASE("project and backproject round trip") {
  CameraIntrinsics cam{350, 360, 159.5, 119.5, 320, 240};
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const Vec2 uv{u(rng) * 150 + 159.5, u(rng) * 110 + 119.5};
    const double z = 0.2 + 0.8 * std::abs(u(rng));
    const Vec3 p = backproject(cam, uv, z);
    const Vec2 back = project(cam, p);
    CHECK((back - uv).norm() < 1e-10);
    CHECK(p.z() == doctest::Approx(z));
  }
}

TEST_CASE("projection is scale invariant along rays") {
  CameraIntrinsics cam{350, 350, 159.5, 119.5, 320, 240};
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int i = 0; i < 50; ++i) {
    const Vec3 p{u(rng), u(rng), 0.5 + std::abs(u(rng))};
    const double s = 0.5 + 2.0 * std::abs(u(rng));
    CHECK((project(cam, s * p) - project(cam, p)).norm() < 1e-9);
  }
}
