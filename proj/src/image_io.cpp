// The only translation unit that touches OpenCV; everything else works on the
// plain Image type.
#include "priqa/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "priqa/core.hpp"

namespace priqa {

namespace {

Image from_mat(const cv::Mat& bgr, const std::string& what) {
  PRIQA_REQUIRE(!bgr.empty(), ErrorCategory::ingestion, "failed to decode " + what);
  PRIQA_REQUIRE(bgr.type() == CV_8UC3, ErrorCategory::ingestion,
                "unsupported pixel format in " + what);
  Image img = Image::create(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      img.at(y, x, 0) = row[x][2];
      img.at(y, x, 1) = row[x][1];
      img.at(y, x, 2) = row[x][0];
    }
  }
  return img;
}

cv::Mat to_mat(const Image& img) {
  cv::Mat bgr(static_cast<int>(img.height), static_cast<int>(img.width), CV_8UC3);
  for (int y = 0; y < bgr.rows; ++y) {
    cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      row[x][2] = img.at(y, x, 0);
      row[x][1] = img.at(y, x, 1);
      row[x][0] = img.at(y, x, 2);
    }
  }
  return bgr;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  PRIQA_REQUIRE(std::filesystem::exists(path), ErrorCategory::io,
                "image file not found: " + path.string());
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  return from_mat(bgr, path.string());
}

void save_image(const Image& img, const std::filesystem::path& path) {
  PRIQA_REQUIRE(!img.empty(), ErrorCategory::size, "save_image: empty image");
  PRIQA_REQUIRE(cv::imwrite(path.string(), to_mat(img)), ErrorCategory::io,
                "failed to write " + path.string());
}

std::vector<std::uint8_t> encode_jpeg(const Image& img, int quality) {
  PRIQA_REQUIRE(quality >= 1 && quality <= 100, ErrorCategory::range,
                "encode_jpeg: quality outside [1,100]");
  std::vector<std::uint8_t> buf;
  const std::vector<int> params = {cv::IMWRITE_JPEG_QUALITY, quality};
  PRIQA_REQUIRE(cv::imencode(".jpg", to_mat(img), buf, params), ErrorCategory::io,
                "jpeg encoding failed");
  return buf;
}

Image decode_image_bytes(const std::vector<std::uint8_t>& bytes) {
  cv::Mat bgr = cv::imdecode(bytes, cv::IMREAD_COLOR);
  return from_mat(bgr, "memory buffer");
}

}  // namespace priqa
