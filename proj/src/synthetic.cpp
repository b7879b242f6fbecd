#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "pah/data.hpp"
#include "pah/errors.hpp"

namespace pah {

namespace fs = std::filesystem;

namespace {

using Color = std::array<double, 3>;

struct IdentityTraits {
  Color skin, hair, shoes;
  int hair_style = 0;  // 0 short, 1 long, 2 capped
  double head_scale = 1.0;
  double body_width = 12.0;
  double leg_length = 22.0;
};

struct Outfit {
  Color top, top_alt, bottom, bottom_alt;
  int top_pattern = 0;  // 0 solid, 1 horizontal stripes, 2 vertical stripes
  int bottom_pattern = 0;
};

std::mt19937_64 keyed_rng(std::uint64_t seed, std::initializer_list<std::uint32_t> key) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed),
                                   static_cast<std::uint32_t>(seed >> 32)};
  words.insert(words.end(), key);
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

Color random_color(std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

IdentityTraits identity_traits(std::uint64_t seed, int identity) {
  auto rng = keyed_rng(seed, {0xA11CEu, static_cast<std::uint32_t>(identity)});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  IdentityTraits t;
  const double tone = 0.35 + 0.55 * u(rng);
  t.skin = {std::min(1.0, tone * 1.1), tone * 0.85, tone * 0.7};
  t.hair = random_color(rng, 0.0, 1.0);
  t.shoes = random_color(rng, 0.0, 0.6);
  t.hair_style = static_cast<int>(rng() % 3);
  t.head_scale = 0.8 + 0.4 * u(rng);
  t.body_width = 9.0 + 7.0 * u(rng);
  t.leg_length = 19.0 + 5.0 * u(rng);
  return t;
}

Outfit outfit(std::uint64_t seed, int identity, int clothes_id) {
  auto rng = keyed_rng(seed, {0xC10Eu, static_cast<std::uint32_t>(identity),
                              static_cast<std::uint32_t>(clothes_id)});
  Outfit o;
  o.top = random_color(rng);
  o.top_alt = random_color(rng);
  o.bottom = random_color(rng);
  o.bottom_alt = random_color(rng);
  o.top_pattern = static_cast<int>(rng() % 3);
  o.bottom_pattern = static_cast<int>(rng() % 3);
  return o;
}

Color patterned(const Outfit& o, bool top, int y, int x) {
  const int pattern = top ? o.top_pattern : o.bottom_pattern;
  const Color& a = top ? o.top : o.bottom;
  const Color& b = top ? o.top_alt : o.bottom_alt;
  if (pattern == 1) return (y / 3) % 2 ? b : a;
  if (pattern == 2) return (x / 3) % 2 ? b : a;
  return a;
}

}  // namespace

ImageSample render_synthetic(const SyntheticSpec& spec, int identity, int clothes_id,
                             std::mt19937_64& rng) {
  const std::size_t H = spec.height, W = spec.width;
  if (H < 16 || W < 8) throw ContractError("render_synthetic: image must be at least 16x8");
  const double sy = static_cast<double>(H) / 64.0;
  const double sx = static_cast<double>(W) / 32.0;
  const IdentityTraits t = identity_traits(spec.seed, identity);
  const Outfit o = outfit(spec.seed, identity, clothes_id);

  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> jitter(-2, 2);
  const double dx = jitter(rng) * sx;
  const double dy = jitter(rng) * sy;
  const double brightness = 0.9 + 0.2 * u(rng);
  const double gray = 0.3 + 0.4 * u(rng);
  const Color bg{gray + 0.1 * (u(rng) - 0.5), gray + 0.1 * (u(rng) - 0.5),
                 gray + 0.1 * (u(rng) - 0.5)};

  const double cx = static_cast<double>(W) / 2.0 + dx;
  const double head_cy = 9.0 * sy + dy;
  const double head_rx = 5.0 * sx * t.head_scale;
  const double head_ry = 6.0 * sy * t.head_scale;
  const double head_bottom = head_cy + head_ry;
  const double torso_top = head_bottom + 1.5 * sy;
  const double waist = torso_top + 20.0 * sy;
  const double legs_end = std::min(waist + t.leg_length * sy, static_cast<double>(H) - 1.0);
  const double half_body = t.body_width * sx / 2.0;

  Tensor img({H, W, 3});
  auto px = img.mutable_data();
  auto put = [&](std::size_t y, std::size_t x, const Color& c) {
    for (std::size_t ch = 0; ch < 3; ++ch) px[(y * W + x) * 3 + ch] = c[ch];
  };

  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const double fy = static_cast<double>(y) + 0.5, fx = static_cast<double>(x) + 0.5;
      Color c = bg;
      const double ex = (fx - cx) / head_rx, ey = (fy - head_cy) / head_ry;
      const bool in_head = ex * ex + ey * ey <= 1.0;
      const bool long_hair = t.hair_style == 1 && std::abs(fx - cx) <= head_rx * 1.15 &&
                             fy >= head_cy - head_ry && fy <= head_bottom + 4.0 * sy;
      if (long_hair) c = t.hair;
      // Torso with sleeves, then arms in skin below the sleeves.
      if (fy >= torso_top && fy < waist) {
        const double off = std::abs(fx - cx);
        if (off <= half_body) {
          c = patterned(o, true, static_cast<int>(y), static_cast<int>(x));
        } else if (off <= half_body + 2.5 * sx) {
          c = fy < torso_top + 8.0 * sy ? o.top : t.skin;
        }
      }
      if (fy >= head_bottom && fy < torso_top && std::abs(fx - cx) <= 1.5 * sx) c = t.skin;
      if (fy >= waist && fy < legs_end) {
        const double off = std::abs(fx - cx);
        if (off >= 0.8 * sx && off <= half_body) {
          c = fy >= legs_end - 2.5 * sy
                  ? t.shoes
                  : patterned(o, false, static_cast<int>(y), static_cast<int>(x));
        }
      }
      if (in_head) {
        c = t.skin;
        const bool top_half = ey < -0.25;
        if (t.hair_style == 0 && top_half) c = t.hair;
        if (t.hair_style == 1 && (ey < -0.4 || std::abs(ex) > 0.8)) c = t.hair;
        if (t.hair_style == 2 && ey < 0.0) c = t.hair;
      }
      put(y, x, c);
    }
  }

  std::normal_distribution<double> noise(0.0, 0.02);
  for (double& v : px) v = std::clamp(v * brightness + noise(rng), 0.0, 1.0);
  quantize_to_bytes(img);

  const double hair_extra = t.hair_style == 1 ? 1.15 : 1.0;
  const auto clip = [](double v, std::size_t hi) {
    return static_cast<int>(std::clamp(v, 0.0, static_cast<double>(hi)));
  };
  HeadBox box{clip(std::floor(cx - head_rx * hair_extra - 1.0), W),
              clip(std::floor(head_cy - head_ry - 1.0), H),
              clip(std::ceil(cx + head_rx * hair_extra + 1.0), W),
              clip(std::ceil(head_bottom + 1.0), H)};

  ImageSample s;
  s.pixels = img;
  s.identity = identity;
  s.clothes_id = clothes_id;
  s.camera_id = static_cast<int>(rng() % 3);
  s.head_box = box;
  return s;
}

std::vector<ManifestRecord> generate_synthetic(const fs::path& root, const SyntheticSpec& spec) {
  if (spec.num_ids < 2) throw ContractError("generate_synthetic: num_ids must be >= 2");
  if (spec.clothes_per_id < 1) throw ContractError("generate_synthetic: clothes_per_id must be >= 1");
  std::mt19937_64 rng = keyed_rng(spec.seed, {0x1A6Eu});
  std::vector<ManifestRecord> records;

  auto emit = [&](int id, int clothes, Split split, std::size_t n) {
    const fs::path dir = root / "images" / split_name(split);
    fs::create_directories(dir);
    ImageSample s = render_synthetic(spec, id, clothes, rng);
    char name[64];
    std::snprintf(name, sizeof name, "%04d_c%d_%03zu.png", id, clothes, n);
    write_png(dir / name, s.pixels);
    ManifestRecord r;
    r.path = (fs::path("images") / split_name(split) / name).generic_string();
    r.identity = id;
    r.clothes_id = clothes;
    r.camera_id = s.camera_id;
    r.head_box = s.head_box;
    r.split = split;
    records.push_back(std::move(r));
  };

  for (std::size_t id = 0; id < spec.num_ids; ++id) {
    for (std::size_t i = 0; i < spec.imgs_per_id; ++i) {
      emit(static_cast<int>(id), static_cast<int>(i % spec.clothes_per_id), Split::kTrain, i);
    }
  }
  const std::size_t first_test = spec.test_ids == 0 ? 0 : spec.num_ids;
  const std::size_t test_count = spec.test_ids == 0 ? spec.num_ids : spec.test_ids;
  for (std::size_t id = first_test; id < first_test + test_count; ++id) {
    std::size_t q = 0, g = 0;
    for (std::size_t c = 0; c < spec.clothes_per_id; ++c) {
      for (std::size_t i = 0; i < spec.query_per_clothes; ++i) {
        emit(static_cast<int>(id), static_cast<int>(c), Split::kQuery, q++);
      }
      for (std::size_t i = 0; i < spec.gallery_per_clothes; ++i) {
        emit(static_cast<int>(id), static_cast<int>(c), Split::kGallery, g++);
      }
    }
  }
  write_manifest(root, records);
  return records;
}

}  // namespace pah
