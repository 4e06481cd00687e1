#include "sldd/localization.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <csignal>
#include <sstream>

#include "sldd/error.hpp"
#include "sldd/io.hpp"

namespace sldd {

namespace {

int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int d = -radius; d <= radius; ++d) {
    const double v = std::exp(-0.5 * d * d / (sigma * sigma));
    k[static_cast<std::size_t>(d + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

std::vector<double> extract_checked(const ExtractorFn& extractor, const FeatureMapBatch& input, int feature_index,
                                    const std::string& where) {
  std::vector<double> f = extractor(input);
  if (feature_index < 0 || static_cast<std::size_t>(feature_index) >= f.size()) {
    throw ConfigError("localize_feature: feature index " + std::to_string(feature_index) + " out of range");
  }
  for (double v : f) {
    if (!std::isfinite(v)) throw NumericError("localize_feature: extractor returned non-finite value " + where);
  }
  return f;
}

}  // namespace

double PatchSchedule::sigma_for(std::size_t k) const {
  if (k < blur_sigma.size()) return blur_sigma[k];
  return sizes.at(k) / 4.0;
}

PatchSchedule PatchSchedule::resolved(int height, int width) const {
  const int edge = std::min(height, width);
  std::vector<std::pair<int, double>> items;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (sizes[k] < 1) throw ConfigError("patch sizes must be positive");
    const int p = std::min(sizes[k], edge);
    items.emplace_back(p, k < blur_sigma.size() ? blur_sigma[k] : p / 4.0);
  }
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  PatchSchedule out;
  out.sizes.clear();
  for (const auto& [p, s] : items) {
    if (!out.sizes.empty() && out.sizes.back() == p) continue;
    out.sizes.push_back(p);
    out.blur_sigma.push_back(s);
  }
  return out;
}

FeatureMapBatch gaussian_blur(const FeatureMapBatch& input, double sigma) {
  if (!(sigma > 0.0)) return input;
  const auto kernel = gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  const int h = input.height(), w = input.width();
  FeatureMapBatch tmp(input.size(), input.features(), h, w), out(input.size(), input.features(), h, w);
  for (int n = 0; n < input.size(); ++n) {
    for (int c = 0; c < input.features(); ++c) {
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          double acc = 0.0;
          for (int d = -radius; d <= radius; ++d) acc += kernel[static_cast<std::size_t>(d + radius)] * input.at(n, c, i, reflect(j + d, w));
          tmp.at(n, c, i, j) = acc;
        }
      }
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          double acc = 0.0;
          for (int d = -radius; d <= radius; ++d) acc += kernel[static_cast<std::size_t>(d + radius)] * tmp.at(n, c, reflect(i + d, h), j);
          out.at(n, c, i, j) = acc;
        }
      }
    }
  }
  return out;
}

LocalizationMap localize_feature(const ExtractorFn& extractor, const FeatureMapBatch& input, int feature_index,
                                 const PatchSchedule& schedule) {
  if (input.size() != 1) throw ConfigError("localize_feature: expects a single input grid");
  const int h = input.height(), w = input.width();
  const PatchSchedule plan = schedule.resolved(h, w);
  if (plan.sizes.empty()) throw ConfigError("localize_feature: empty patch schedule");
  const double base = extract_checked(extractor, input, feature_index, "on the unmodified input")
                          [static_cast<std::size_t>(feature_index)];

  LocalizationMap out;
  out.cell = plan.sizes.front();
  out.rows = (h + out.cell - 1) / out.cell;
  out.cols = (w + out.cell - 1) / out.cell;
  out.values.assign(static_cast<std::size_t>(out.rows) * out.cols, 0.0);
  out.sizes = plan.sizes;

  for (std::size_t k = 0; k < plan.sizes.size(); ++k) {
    const int p = plan.sizes[k];
    const FeatureMapBatch blurred = gaussian_blur(input, plan.sigma_for(k));
    const int gy = (h + p - 1) / p, gx = (w + p - 1) / p;
    std::vector<double> drop(static_cast<std::size_t>(gy) * gx, 0.0);
    for (int y = 0; y < gy; ++y) {
      for (int x = 0; x < gx; ++x) {
        const int y0 = std::min(y * p, h - p), x0 = std::min(x * p, w - p);
        FeatureMapBatch masked = input;
        for (int c = 0; c < input.features(); ++c) {
          for (int i = y0; i < y0 + p; ++i) {
            for (int j = x0; j < x0 + p; ++j) masked.at(0, c, i, j) = blurred.at(0, c, i, j);
          }
        }
        std::ostringstream where;
        where << "for patch size " << p << " at cell (" << y << ", " << x << ")";
        const double v = extract_checked(extractor, masked, feature_index, where.str())
                             [static_cast<std::size_t>(feature_index)];
        drop[static_cast<std::size_t>(y) * gx + x] = std::max(0.0, base - v);
      }
    }
    const double top = *std::max_element(drop.begin(), drop.end());
    if (top > 0.0) {
      for (double& v : drop) v /= top;
    }
    for (int r = 0; r < out.rows; ++r) {
      const int cy = std::min(r * out.cell, h - out.cell) + out.cell / 2;
      const int ry = std::min(cy / p, gy - 1);
      for (int c = 0; c < out.cols; ++c) {
        const int cx = std::min(c * out.cell, w - out.cell) + out.cell / 2;
        const int rx = std::min(cx / p, gx - 1);
        out.values[static_cast<std::size_t>(r) * out.cols + c] += drop[static_cast<std::size_t>(ry) * gx + rx];
      }
    }
    out.per_size.push_back(std::move(drop));
    out.per_size_dims.emplace_back(gy, gx);
  }
  return out;
}

ExtractorFn toy_extractor_fn(ToyExtractor extractor) {
  return [ext = std::move(extractor)](const FeatureMapBatch& input) {
    const Matrix pooled = pool_maps(ext.apply(input)).values();
    return std::vector<double>(pooled.data(), pooled.data() + pooled.size());
  };
}

ExtractorFn subprocess_extractor(std::vector<std::string> argv) {
  if (argv.empty()) throw ConfigError("subprocess_extractor: empty command");
  return [argv = std::move(argv)](const FeatureMapBatch& input) {
    std::ostringstream payload;
    io::write_fmp(payload, input);
    const std::string bytes = payload.str();

    int to_child[2], from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) throw IoError("subprocess_extractor: pipe failed");
    const pid_t pid = fork();
    if (pid < 0) throw IoError("subprocess_extractor: fork failed");
    if (pid == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      std::vector<char*> args;
      for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
      args.push_back(nullptr);
      execvp(args[0], args.data());
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    // Ignore SIGPIPE while writing in case the child exits early.
    auto old = std::signal(SIGPIPE, SIG_IGN);
    std::size_t written = 0;
    while (written < bytes.size()) {
      const ssize_t k = write(to_child[1], bytes.data() + written, bytes.size() - written);
      if (k < 0) {
        if (errno == EINTR) continue;
        break;
      }
      written += static_cast<std::size_t>(k);
    }
    close(to_child[1]);
    std::signal(SIGPIPE, old);
    std::string reply;
    char buf[4096];
    for (;;) {
      const ssize_t k = read(from_child[0], buf, sizeof(buf));
      if (k < 0 && errno == EINTR) continue;
      if (k <= 0) break;
      reply.append(buf, static_cast<std::size_t>(k));
    }
    close(from_child[0]);
    int status = 0;
    waitpid(pid, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      throw IoError("subprocess_extractor: '" + argv[0] + "' exited with failure");
    }
    std::istringstream in(reply);
    const Matrix f = io::read_fmx(in);
    if (f.rows() != 1) throw IoError("subprocess_extractor: expected a 1 x F matrix");
    return std::vector<double>(f.data(), f.data() + f.size());
  };
}

}  // namespace sldd
