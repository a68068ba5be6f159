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

#ifndef SKETCHTUNE_VQA_HTTP_HPP_
#define SKETCHTUNE_VQA_HTTP_HPP_

#include <string>

#include "sketchtune/vqa.hpp"

namespace sketchtune {

struct HttpBackendOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string path = "/answer";
  double timeout_seconds = 30.0;
  int retries = 2;
  int max_in_flight = 4;
};

/// Posts multipart {image: PNG bytes, question: text} and expects {"answer": text} back.
class HttpBackend : public VqaBackend {
 public:
  explicit HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {}
  std::string answer(const Raster& image, const std::string& question) override;
  BackendInfo info() const override;

 private:
  HttpBackendOptions options_;
};

}  // namespace sketchtune

#endif  // SKETCHTUNE_VQA_HTTP_HPP_
