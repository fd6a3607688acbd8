#include "w2c/imaging.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "w2c/encoding.hpp"
#include "w2c/errors.hpp"

namespace w2c::imaging {

BoundingBox pad_and_clamp(const BoundingBox& box, double pad_fraction, int image_width, int image_height) {
    auto pad_w = static_cast<int>(std::llround(pad_fraction * box.width()));
    auto pad_h = static_cast<int>(std::llround(pad_fraction * box.height()));
    return {std::max(0, box.x1 - pad_w), std::max(0, box.y1 - pad_h), std::min(image_width, box.x2 + pad_w),
            std::min(image_height, box.y2 + pad_h)};
}

std::optional<NetpbmHeader> read_netpbm_header(std::string_view bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) return std::nullopt;
    NetpbmHeader header;
    header.kind = bytes[1];
    std::size_t pos = 2;
    int fields[3] = {0, 0, 0};
    for (int& field : fields) {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) return std::nullopt;
        long long value = 0;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            value = value * 10 + (bytes[pos] - '0');
            if (value > 1'000'000) return std::nullopt;
            ++pos;
        }
        field = static_cast<int>(value);
    }
    // Exactly one whitespace byte separates the header from the raster.
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) return std::nullopt;
    header.width = fields[0];
    header.height = fields[1];
    header.maxval = fields[2];
    header.data_offset = pos + 1;
    if (header.width <= 0 || header.height <= 0 || header.maxval <= 0 || header.maxval > 65535) return std::nullopt;
    return header;
}

std::string crop_netpbm(std::string_view bytes, const BoundingBox& box) {
    auto header = read_netpbm_header(bytes);
    if (!header) throw InvalidValue("not a binary netpbm image");
    if (!box.fits(header->width, header->height)) throw InvalidValue("crop box outside netpbm raster");
    std::size_t sample = header->maxval > 255 ? 2 : 1;
    std::size_t pixel = sample * (header->kind == '6' ? 3 : 1);
    std::size_t row = pixel * static_cast<std::size_t>(header->width);
    if (bytes.size() < header->data_offset + row * static_cast<std::size_t>(header->height))
        throw InvalidValue("truncated netpbm raster");

    std::string out = std::string("P") + header->kind + "\n" + std::to_string(box.width()) + " " +
                      std::to_string(box.height()) + "\n" + std::to_string(header->maxval) + "\n";
    for (int y = box.y1; y < box.y2; ++y) {
        auto start = header->data_offset + row * static_cast<std::size_t>(y) + pixel * static_cast<std::size_t>(box.x1);
        out.append(bytes.substr(start, pixel * static_cast<std::size_t>(box.width())));
    }
    return out;
}

std::string make_netpbm(int width, int height, unsigned char fill) {
    std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.append(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3, static_cast<char>(fill));
    return out;
}

ImagePayload prepare_payload(const ImageRecord& image, const std::optional<BoundingBox>& crop) {
    auto bytes = read_file_bytes(image.path);
    if (!crop) return {std::move(bytes), std::nullopt};
    if (read_netpbm_header(bytes)) return {crop_netpbm(bytes, *crop), std::nullopt};
    return {std::move(bytes), crop};
}

std::string content_digest(const ImageRecord& image) {
    if (!image.content_digest.empty()) return image.content_digest;
    return sha256_hex(read_file_bytes(image.path));
}

} // namespace w2c::imaging
