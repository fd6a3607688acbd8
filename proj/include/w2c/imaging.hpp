#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "w2c/datamodel.hpp"

namespace w2c::imaging {

/// Grows the box by `pad_fraction` of its own width/height on every side and
/// clamps to the image. A pad of zero returns the box unchanged.
BoundingBox pad_and_clamp(const BoundingBox& box, double pad_fraction, int image_width, int image_height);

struct NetpbmHeader {
    char kind = '6'; // '5' greymap, '6' pixmap
    int width = 0;
    int height = 0;
    int maxval = 255;
    std::size_t data_offset = 0;
};

/// Header of a binary P5/P6 file, or nullopt for anything else.
std::optional<NetpbmHeader> read_netpbm_header(std::string_view bytes);

/// Copies the pixel rectangle out of a binary P5/P6 image.
std::string crop_netpbm(std::string_view bytes, const BoundingBox& box);

std::string make_netpbm(int width, int height, unsigned char fill);

/// What goes on the wire for an image query. Netpbm images are cropped here;
/// for other formats the full file is sent and `crop` tells the service which
/// rectangle to look at.
struct ImagePayload {
    std::string bytes;
    std::optional<BoundingBox> crop;
};

ImagePayload prepare_payload(const ImageRecord& image, const std::optional<BoundingBox>& crop);

/// SHA-256 of the file content; uses `image.content_digest` when already set.
std::string content_digest(const ImageRecord& image);

} // namespace w2c::imaging
