import io
from typing import Optional

import numpy as np
from lxml import etree
from PIL import Image, ImageDraw

from fit_result import FitResult
from hawkes_core import TriggeringKernel

width = 480
height = 320
margin = 40
band_fill = '#9ecae1'
median_stroke = '#08519c'
truth_stroke = '#d62728'
svg_ns = 'http://www.w3.org/2000/svg'


def tag(name):
    return f'{{{svg_ns}}}{name}'


def number(value):
    text = f"{float(value):.2f}"
    return '0.00' if text == '-0.00' else text


class PlotFrame:

    def __init__(self, x_max, y_max):
        self.x_max = x_max
        self.y_max = y_max if y_max > 0 else 1.0

    def x(self, t):
        return margin + (width - 2 * margin) * np.asarray(t, dtype=float) / self.x_max

    def y(self, v):
        return height - margin - (height - 2 * margin) * np.asarray(v, dtype=float) / self.y_max

    def points(self, t, v):
        return list(zip(self.x(t).tolist(), self.y(v).tolist()))


def plot_curves(fit: FitResult, truth: Optional[TriggeringKernel] = None):
    grid = np.asarray(fit.grid)
    curves = {'p10': np.asarray(fit.kernel_p10), 'p50': np.asarray(fit.kernel_p50),
              'p90': np.asarray(fit.kernel_p90)}
    if truth is not None:
        curves['truth'] = np.asarray(truth(grid), dtype=float)
    top = max(float(np.max(c)) for c in curves.values())
    return grid, curves, PlotFrame(float(grid[-1]), 1.05 * top)


def path_data(points, closed=False):
    head, *rest = points
    text = f"M{number(head[0])},{number(head[1])}" + ''.join(f" L{number(x)},{number(y)}" for x, y in rest)
    return text + (' Z' if closed else '')


def render_svg(fit: FitResult, truth: Optional[TriggeringKernel] = None, title=None) -> bytes:
    grid, curves, frame = plot_curves(fit, truth)
    svg = etree.Element(tag('svg'), nsmap={None: svg_ns}, width=str(width), height=str(height),
                        viewBox=f"0 0 {width} {height}")
    etree.SubElement(svg, tag('title')).text = title or f"{fit.method} kernel estimate"
    band = frame.points(grid, curves['p90']) + frame.points(grid[::-1], curves['p10'][::-1])
    etree.SubElement(svg, tag('path'), id='band', d=path_data(band, closed=True), fill=band_fill, stroke='none')
    etree.SubElement(svg, tag('path'), id='median', d=path_data(frame.points(grid, curves['p50'])),
                     fill='none', stroke=median_stroke, **{'stroke-width': '2'})
    if 'truth' in curves:
        etree.SubElement(svg, tag('path'), id='truth', d=path_data(frame.points(grid, curves['truth'])),
                         fill='none', stroke=truth_stroke, **{'stroke-dasharray': '6 4'})
    x0, y0 = number(frame.x(0.0)), number(frame.y(0.0))
    etree.SubElement(svg, tag('line'), id='x-axis', x1=x0, y1=y0, x2=number(frame.x(frame.x_max)), y2=y0, stroke='black')
    etree.SubElement(svg, tag('line'), id='y-axis', x1=x0, y1=y0, x2=x0, y2=number(frame.y(frame.y_max)), stroke='black')
    for label, x, y in (('0', frame.x(0.0), frame.y(0.0) + 16), (number(frame.x_max), frame.x(frame.x_max), frame.y(0.0) + 16),
                        (number(frame.y_max), frame.x(0.0) - 4, frame.y(frame.y_max) + 4)):
        text = etree.SubElement(svg, tag('text'), x=number(x), y=number(y), **{'font-size': '11', 'text-anchor': 'middle'})
        text.text = label
    return etree.tostring(svg, pretty_print=True, xml_declaration=True, encoding='utf-8')


def render_png(fit: FitResult, truth: Optional[TriggeringKernel] = None) -> bytes:
    grid, curves, frame = plot_curves(fit, truth)
    img = Image.new('RGB', (width, height), 'white')
    draw = ImageDraw.Draw(img)
    band = frame.points(grid, curves['p90']) + frame.points(grid[::-1], curves['p10'][::-1])
    draw.polygon(band, fill=band_fill)
    draw.line(frame.points(grid, curves['p50']), fill=median_stroke, width=2)
    if 'truth' in curves:
        draw.line(frame.points(grid, curves['truth']), fill=truth_stroke, width=1)
    origin = (float(frame.x(0.0)), float(frame.y(0.0)))
    draw.line([origin, (float(frame.x(frame.x_max)), origin[1])], fill='black')
    draw.line([origin, (origin[0], float(frame.y(frame.y_max)))], fill='black')
    buffer = io.BytesIO()
    img.save(buffer, 'PNG', optimize=True)
    return buffer.getvalue()
