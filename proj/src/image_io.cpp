#include "bvsr/image_io.hpp"

#include "bvsr/errors.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cstdio>

namespace bvsr {

namespace fs = std::filesystem;

Frame read_png(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw NotFoundError("frame not found: " + path.string());
  cv::Mat bgr;
  try {
    bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw ParseError("cannot decode " + path.string() + ": " + e.what());
  }
  if (bgr.empty()) throw ParseError("cannot decode " + path.string());
  if (!bgr.isContinuous()) bgr = bgr.clone();
  auto hwc = torch::from_blob(bgr.data, {bgr.rows, bgr.cols, 3}, torch::kUInt8);
  // OpenCV stores BGR.
  return Frame(hwc.flip({2}).permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous());
}

void write_png(const fs::path& path, const Frame& frame) {
  auto hwc = frame.data()
                 .detach()
                 .to(torch::kCPU, torch::kFloat32)
                 .clamp(0.0, 1.0)
                 .mul(255.0)
                 .round()
                 .to(torch::kUInt8)
                 .permute({1, 2, 0})
                 .flip({2})
                 .contiguous();
  cv::Mat bgr(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3, hwc.data_ptr<uint8_t>());
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr);
  } catch (const cv::Exception& e) {
    throw DataError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw DataError("cannot write " + path.string());
}

std::vector<fs::path> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw NotFoundError("frame directory not found: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

FrameSequence read_sequence(const fs::path& dir) {
  std::vector<Frame> frames;
  for (const auto& p : list_frames(dir)) frames.push_back(read_png(p));
  if (frames.empty()) throw NotFoundError("no PNG frames in " + dir.string());
  try {
    return FrameSequence(std::move(frames));
  } catch (const std::invalid_argument& e) {
    throw DataError(dir.string() + ": " + e.what());
  }
}

void write_sequence(const fs::path& dir, const FrameSequence& seq) {
  fs::create_directories(dir);
  for (size_t i = 0; i < seq.size(); ++i) write_png(dir / frame_name(i), seq[i]);
}

std::string frame_name(size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%08zu.png", index);
  return buf;
}

}  // namespace bvsr
