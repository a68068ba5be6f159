// Copyright 2026 The sketchtune Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sketchtune/vqa_http.hpp"

#include <httplib.h>

#include <chrono>
#include <thread>

#include "sketchtune/error.hpp"

namespace sketchtune {

BackendInfo HttpBackend::info() const {
  return {"http://" + options_.host + ":" + std::to_string(options_.port) + options_.path, "1", options_.max_in_flight};
}

std::string HttpBackend::answer(const Raster& image, const std::string& question) {
  const auto png = encode_png(image);
  httplib::MultipartFormDataItems items = {
      {"image", std::string(png.begin(), png.end()), "image.png", "image/png"},
      {"question", question, "", "text/plain"},
  };
  httplib::Client client(options_.host, options_.port);
  const auto timeout = std::chrono::duration<double>(options_.timeout_seconds);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(50 << attempt));
    auto res = client.Post(options_.path, items);
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "status " + std::to_string(res->status);
      if (res->status < 500) break;
      continue;
    }
    try {
      return nlohmann::json::parse(res->body).at("answer").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw BackendFailure(std::string("malformed backend response: ") + e.what());
    }
  }
  throw BackendFailure("VQA request failed: " + last_error);
}

}  // namespace sketchtune
