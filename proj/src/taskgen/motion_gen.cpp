// Copyright (c) 2026, The moelora Authors
// SPDX-License-Identifier: Apache-2.0

#include "moelora/taskgen/motion_gen.hpp"

#include "moelora/core/random.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace moelora {

namespace {

constexpr double kPi = 3.14159265358979323846;

using V3 = Eigen::Vector3d;

struct GaitParams {
  double freq = 1.0;     // Hz
  double hip = 0.0;      // hip swing amplitude (rad)
  double knee = 0.0;     // peak knee flexion (rad)
  double arm = 0.0;      // shoulder swing amplitude (rad)
  double elbow = 0.0;    // elbow flexion (rad)
  double lean = 0.0;     // torso pitch (rad)
  double speed = 0.0;    // root speed (m/s)
  double turn = 0.0;     // yaw rate (rad/s)
};

GaitParams params_for(const MotionSpec& spec) {
  const bool fast = spec.speed == Speed::fast;
  GaitParams p;
  switch (spec.gait) {
    case Gait::walk:
    case Gait::circle:
      p = {fast ? 1.4 : 0.9, fast ? 0.5 : 0.35, fast ? 0.8 : 0.5, fast ? 0.45 : 0.3, 0.25, 0.05, fast ? 1.6 : 1.0, 0.0};
      if (spec.gait == Gait::circle) p.turn = p.speed / 1.5;
      break;
    case Gait::run:
      p = {fast ? 1.9 : 1.4, fast ? 0.8 : 0.6, fast ? 1.4 : 1.0, fast ? 0.7 : 0.5, 1.3, fast ? 0.3 : 0.15,
           fast ? 3.5 : 2.5, 0.0};
      break;
    case Gait::wave:
      p = {fast ? 1.6 : 0.8, 0.0, 0.0, fast ? 0.9 : 0.4, 0.0, 0.0, 0.0, 0.0};
      break;
    case Gait::squat:
      p = {fast ? 0.7 : 0.35, fast ? 1.3 : 1.0, 0.0, 1.2, 0.0, 0.0, 0.0, 0.0};
      break;
  }
  return p;
}

double yaw_of(Direction d) {
  switch (d) {
    case Direction::forward: return 0.0;
    case Direction::left: return kPi / 2;
    case Direction::right: return -kPi / 2;
  }
  return 0.0;
}

// Unit vector hanging down (-y) swung forward (+z) by `a` in the sagittal plane.
V3 sagittal(double a) { return V3(0.0, -std::cos(a), std::sin(a)); }

struct Jitter {
  double amp = 1.0;
  double freq = 1.0;
  double phase = 0.0;
  double speed = 1.0;
  double noise = 0.0;
};

// Body-frame joint positions (pelvis at origin, facing +z) at time t.
Mat<double> body_pose(const SkeletonSpec& sk, const MotionSpec& spec, const GaitParams& p, const Jitter& j,
                      double t) {
  const double phase = 2 * kPi * p.freq * j.freq * t + j.phase;
  const double s = std::sin(phase);
  const double amp = j.amp;
  const auto rest = [&](Index a) { return V3(sk.rest.row(a).transpose()); };
  const auto bone = [&](Index a, Index b) { return (rest(b) - rest(a)).norm(); };

  double lean = p.lean * amp;
  double hip_l = 0, hip_r = 0, knee_l = 0, knee_r = 0;
  double sh_l = 0, sh_r = 0, el_l = p.elbow, el_r = p.elbow;
  bool wave = false;
  double wave_swing = 0.0;

  switch (spec.gait) {
    case Gait::walk:
    case Gait::circle:
    case Gait::run:
      hip_l = p.hip * amp * s;
      hip_r = -p.hip * amp * s;
      knee_l = p.knee * amp * std::max(0.0, std::cos(phase));
      knee_r = p.knee * amp * std::max(0.0, -std::cos(phase));
      sh_l = -p.arm * amp * s;
      sh_r = p.arm * amp * s;
      break;
    case Gait::wave:
      wave = true;
      wave_swing = p.arm * amp * s;
      sh_l = 0.05;
      el_l = 0.1;
      break;
    case Gait::squat: {
      const double depth = p.hip * amp * 0.5 * (1.0 - std::cos(phase));
      hip_l = hip_r = depth;
      knee_l = knee_r = 2.0 * depth;
      lean = 0.5 * depth;
      sh_l = sh_r = p.arm * depth / p.hip;
      el_l = el_r = 0.1;
      break;
    }
  }

  Mat<double> out(sk.joints, 3);
  // torso chain leans forward about the pelvis
  const Eigen::AngleAxisd pitch(lean, V3::UnitX());
  const V3 pelvis = rest(0);
  for (Index a = 0; a <= 4; ++a) out.row(a) = (pitch * (rest(a) - pelvis)).transpose();
  const V3 chest = out.row(2).transpose();
  // arms hang from shoulders attached to the chest
  const auto arm = [&](Index sh, Index el, Index wr, double shoulder, double elbow) {
    const V3 shoulder_pos = chest + pitch * (rest(sh) - rest(2));
    const V3 upper = sagittal(shoulder);
    const V3 fore = sagittal(shoulder + elbow);
    out.row(sh) = shoulder_pos.transpose();
    out.row(el) = (shoulder_pos + bone(sh, el) * upper).transpose();
    out.row(wr) = (shoulder_pos + bone(sh, el) * upper + bone(el, wr) * fore).transpose();
  };
  arm(5, 6, 7, sh_l, el_l);
  if (wave) {
    // right arm raised to the side, forearm swinging overhead
    const V3 shoulder_pos = chest + pitch * (rest(8) - rest(2));
    const double raise = p.freq > 1.0 ? 2.8 : 2.3;
    const V3 upper(-std::sin(raise), -std::cos(raise), 0.0);
    const double fa = raise + 0.4 + wave_swing;
    const V3 fore(-std::sin(fa), -std::cos(fa), 0.0);
    out.row(8) = shoulder_pos.transpose();
    out.row(9) = (shoulder_pos + bone(8, 9) * upper).transpose();
    out.row(10) = (shoulder_pos + bone(8, 9) * upper + bone(9, 10) * fore).transpose();
  } else {
    arm(8, 9, 10, sh_r, el_r);
  }
  const auto leg = [&](Index hip, Index knee, Index ankle, double h, double k) {
    const V3 hip_pos = rest(hip) - pelvis;
    const V3 thigh = sagittal(h);
    const V3 shin = sagittal(h - k);
    out.row(hip) = hip_pos.transpose();
    out.row(knee) = (hip_pos + bone(hip, knee) * thigh).transpose();
    out.row(ankle) = (hip_pos + bone(hip, knee) * thigh + bone(knee, ankle) * shin).transpose();
  };
  leg(11, 12, 13, hip_l, knee_l);
  leg(14, 15, 16, hip_r, knee_r);
  return out;
}

// Height of the pelvis above the lowest ankle.
double pelvis_height(const Mat<double>& body) { return -std::min(body(13, 1), body(16, 1)); }

}  // namespace

const char* to_string(Gait g) {
  switch (g) {
    case Gait::walk: return "walk";
    case Gait::run: return "run";
    case Gait::wave: return "wave";
    case Gait::squat: return "squat";
    case Gait::circle: return "circle";
  }
  return "walk";
}

const char* to_string(Speed s) { return s == Speed::slow ? "slow" : "fast"; }

const char* to_string(Direction d) {
  switch (d) {
    case Direction::forward: return "forward";
    case Direction::left: return "left";
    case Direction::right: return "right";
  }
  return "forward";
}

Gait parse_gait(const std::string& s) {
  for (Gait g : kGaits)
    if (s == to_string(g)) return g;
  throw std::invalid_argument("unknown gait '" + s + "'");
}

Speed parse_speed(const std::string& s) {
  for (Speed v : kSpeeds)
    if (s == to_string(v)) return v;
  throw std::invalid_argument("unknown speed '" + s + "'");
}

Direction parse_direction(const std::string& s) {
  for (Direction d : kDirections)
    if (s == to_string(d)) return d;
  throw std::invalid_argument("unknown direction '" + s + "'");
}

std::string MotionSpec::key() const {
  return std::string(to_string(gait)) + "/" + to_string(speed) + "/" + to_string(direction) + "/" +
         std::to_string(frames);
}

std::vector<MotionSpec> all_motion_specs() {
  std::vector<MotionSpec> out;
  for (Gait g : kGaits)
    for (Speed s : kSpeeds)
      for (Direction d : kDirections)
        for (Index f : kDurations) out.push_back({g, s, d, f});
  return out;
}

MotionSequence generate_motion(const MotionSpec& spec, const SkeletonSpec& skeleton, std::uint64_t seed, bool jitter) {
  if (skeleton.joints != 17 || skeleton.channels != 3) {
    throw std::invalid_argument("generate_motion: the generator drives the 17-joint toy skeleton");
  }
  if (spec.frames < 1) throw std::invalid_argument("generate_motion: frames must be positive");
  const GaitParams p = params_for(spec);
  Jitter j;
  if (jitter) {
    Rng rng = Rng(seed).derive("motion/" + spec.key());
    j.amp = 1.0 + 0.05 * std::clamp(rng.normal(), -2.0, 2.0);
    j.freq = 1.0 + 0.03 * std::clamp(rng.normal(), -2.0, 2.0);
    j.phase = 0.1 * std::clamp(rng.normal(), -2.0, 2.0);
    j.speed = 1.0 + 0.05 * std::clamp(rng.normal(), -2.0, 2.0);
    j.noise = 0.003;
  }
  Rng noise = Rng(seed).derive("motion/noise/" + spec.key());
  const double yaw0 = yaw_of(spec.direction);
  const double dt = 1.0 / kMotionFps;
  const double h = 1e-3;
  MotionSequence m;
  m.fps = kMotionFps;
  m.frames.resize(spec.frames, skeleton.joints * 3);
  for (Index f = 0; f < spec.frames; ++f) {
    const double t = static_cast<double>(f) * dt;
    const double yaw = yaw0 + p.turn * t;
    const Eigen::AngleAxisd facing(yaw, V3::UnitY());
    Mat<double> body = body_pose(skeleton, spec, p, j, t);
    const double vy = (pelvis_height(body_pose(skeleton, spec, p, j, t + h)) -
                       pelvis_height(body_pose(skeleton, spec, p, j, t - h))) /
                      (2 * h);
    const V3 forward = facing * V3::UnitZ();
    const V3 velocity = p.speed * j.speed * forward + V3(0.0, vy, 0.0);
    m.frames.block(f, 0, 1, 3) = velocity.transpose();
    for (Index a = 1; a < skeleton.joints; ++a) {
      V3 pos = facing * V3(body.row(a).transpose());
      if (j.noise > 0) pos += V3(noise.normal(0, j.noise), noise.normal(0, j.noise), noise.normal(0, j.noise));
      m.frames.block(f, 3 * a, 1, 3) = pos.transpose();
    }
  }
  return m;
}

MotionSequence canonical_motion(const MotionSpec& spec, const SkeletonSpec& skeleton) {
  return generate_motion(spec, skeleton, 0, false);
}

MotionSequence resample(const MotionSequence& motion, Index frames) {
  const Index src = motion.length();
  if (src < 1 || frames < 1) throw std::invalid_argument("resample: empty motion");
  if (frames == src) return motion;
  MotionSequence out;
  out.fps = motion.fps * static_cast<double>(frames) / static_cast<double>(src);
  out.frames.resize(frames, motion.frames.cols());
  for (Index f = 0; f < frames; ++f) {
    const double x = frames == 1 ? 0.0 : static_cast<double>(f) * static_cast<double>(src - 1) / static_cast<double>(frames - 1);
    const auto i0 = static_cast<Index>(std::floor(x));
    const Index i1 = std::min(i0 + 1, src - 1);
    const double w = x - static_cast<double>(i0);
    out.frames.row(f) = (1 - w) * motion.frames.row(i0) + w * motion.frames.row(i1);
  }
  return out;
}

double motion_distance(const MotionSequence& a, const MotionSequence& b) {
  if (a.frames.cols() != b.frames.cols()) throw ShapeError("motion_distance: joint layouts differ");
  const MotionSequence rb = resample(b, a.length());
  return (a.frames - rb.frames).squaredNorm() / static_cast<double>(a.frames.size());
}

SpecLibrary::SpecLibrary(const SkeletonSpec& skeleton) : specs_(all_motion_specs()) {
  for (const auto& s : specs_) motions_.push_back(canonical_motion(s, skeleton));
}

const MotionSequence& SpecLibrary::canonical(const MotionSpec& spec) const {
  for (std::size_t i = 0; i < specs_.size(); ++i)
    if (specs_[i] == spec) return motions_[i];
  throw std::out_of_range("SpecLibrary: unknown spec " + spec.key());
}

MotionSpec SpecLibrary::recover(const MotionSequence& motion) const {
  double best = std::numeric_limits<double>::infinity();
  std::size_t pick = specs_.size();
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (specs_[i].frames != motion.length()) continue;
    const double d = motion_distance(motion, motions_[i]);
    if (d < best) {
      best = d;
      pick = i;
    }
  }
  if (pick == specs_.size()) {
    // no spec of this length: fall back to every spec
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      const double d = motion_distance(motion, motions_[i]);
      if (d < best) {
        best = d;
        pick = i;
      }
    }
  }
  return specs_[pick];
}

double SpecLibrary::score(const MotionSequence& motion, const MotionSpec& spec) const {
  return motion_distance(motion, canonical(spec));
}

namespace {

std::vector<std::string> gait_words(Gait g) {
  switch (g) {
    case Gait::walk: return {"walks"};
    case Gait::run: return {"runs"};
    case Gait::wave: return {"waves"};
    case Gait::squat: return {"squats"};
    case Gait::circle: return {"circles"};
  }
  return {};
}

std::vector<std::string> direction_words(Direction d) {
  switch (d) {
    case Direction::forward: return {"forward"};
    case Direction::left: return {"to", "the", "left"};
    case Direction::right: return {"to", "the", "right"};
  }
  return {};
}

void append(std::vector<std::string>& out, const std::vector<std::string>& words) {
  out.insert(out.end(), words.begin(), words.end());
}

}  // namespace

std::vector<std::string> caption_words(const MotionSpec& spec, Index template_id) {
  const std::string speed = spec.speed == Speed::slow ? "slowly" : "quickly";
  const std::string frames = std::to_string(spec.frames);
  std::vector<std::string> out;
  switch (((template_id % kCaptionTemplates) + kCaptionTemplates) % kCaptionTemplates) {
    case 0:  // a person walks slowly forward for 16 frames
      out = {"a", "person"};
      append(out, gait_words(spec.gait));
      out.push_back(speed);
      append(out, direction_words(spec.direction));
      append(out, {"for", frames, "frames"});
      break;
    case 1:  // someone walks forward slowly , 16 frames
      out = {"someone"};
      append(out, gait_words(spec.gait));
      append(out, direction_words(spec.direction));
      append(out, {speed, ",", frames, "frames"});
      break;
    default:  // 16 frames of a person who walks slowly forward
      out = {frames, "frames", "of", "a", "person", "who"};
      append(out, gait_words(spec.gait));
      out.push_back(speed);
      append(out, direction_words(spec.direction));
      break;
  }
  return out;
}

std::optional<MotionSpec> parse_caption(const std::vector<std::string>& words) {
  std::optional<Gait> gait;
  std::optional<Speed> speed;
  std::optional<Direction> direction;
  std::optional<Index> frames;
  for (const auto& w : words) {
    for (Gait g : kGaits)
      if (w == gait_words(g).front()) gait = g;
    if (w == "slowly") speed = Speed::slow;
    if (w == "quickly") speed = Speed::fast;
    if (w == "forward") direction = Direction::forward;
    if (w == "left") direction = Direction::left;
    if (w == "right") direction = Direction::right;
    for (Index f : kDurations)
      if (w == std::to_string(f)) frames = f;
  }
  if (!gait || !speed || !direction || !frames) return std::nullopt;
  return MotionSpec{*gait, *speed, *direction, *frames};
}

}  // namespace moelora
